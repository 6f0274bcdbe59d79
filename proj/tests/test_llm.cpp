#include <gtest/gtest.h>

#include <cstdlib>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "scenegen/llm_client.hpp"
#include "scenegen/llm_parse.hpp"

using namespace scenegen;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::io_error;
}

// Local chat-completion endpoint for transport tests.
class ChatServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit ChatServer(Handler h) {
    server_.Post("/v1/chat/completions", std::move(h));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ChatServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

}  // namespace

TEST(ParseLayout, SingleTuple) {
  const auto r = parse_layout_response(
      "Objects: [('a bird', [296, 42, 143, 100])]\nBackground prompt: A realistic image of a landscape scene");
  ASSERT_EQ(r.layout.size(), 1u);
  EXPECT_EQ(r.layout[0].name, "a bird");
  EXPECT_EQ(r.layout[0].box, (BBox{296, 42, 143, 100}));
  EXPECT_EQ(r.background_prompt, "A realistic image of a landscape scene");
}

TEST(ParseLayout, FarmhouseReply) {
  const auto r = parse_layout_response(fixtures::kFarmhouseLayout);
  ASSERT_EQ(r.layout.size(), 4u);
  EXPECT_EQ(r.layout[0].name, "a red farmhouse");
  EXPECT_EQ(r.layout[0].box, (BBox{105, 228, 302, 245}));
  EXPECT_EQ(r.layout[1].box, (BBox{4, 385, 504, 112}));
  EXPECT_EQ(r.layout[2].name, "an antique tractor");
  EXPECT_EQ(r.layout[2].box, (BBox{28, 382, 157, 72}));
  EXPECT_EQ(r.layout[3].name, "a scarecrow");
  EXPECT_EQ(r.layout[3].box, (BBox{368, 271, 66, 156}));
  EXPECT_EQ(r.background_prompt, "A realistic image of a quiet countryside with rolling hills");
}

TEST(ParseLayout, ToleratesProseAndWhitespace) {
  const auto r = parse_layout_response(
      "Sure! Here is the layout.\n\n  objects:\n[ ( \"a child's kite\" , [ 1.5 ,2, 3e1, 4 ] ) , ]\n"
      "Background prompt:   A windy beach   \nHope this helps.");
  ASSERT_EQ(r.layout.size(), 1u);
  EXPECT_EQ(r.layout[0].name, "a child's kite");
  EXPECT_EQ(r.layout[0].box, (BBox{1.5, 2, 30, 4}));
  EXPECT_EQ(r.background_prompt, "A windy beach");
}

TEST(ParseLayout, Errors) {
  EXPECT_EQ(code_of([] { parse_layout_response("Objects: []\nBackground prompt: x"); }), Errc::empty_layout);
  EXPECT_EQ(code_of([] { parse_layout_response("Background prompt: x"); }), Errc::missing_section);
  EXPECT_EQ(code_of([] { parse_layout_response("Objects: [('a', [1,2,3,4])]"); }), Errc::missing_section);
  EXPECT_EQ(code_of([] { parse_layout_response("Objects: [('a', [1,2,3])]\nBackground prompt: x"); }),
            Errc::malformed_tuple);
  EXPECT_EQ(code_of([] { parse_layout_response("Objects: [('a', [1,2,x,4])]\nBackground prompt: x"); }),
            Errc::malformed_tuple);
}

TEST(ParseLayout, DuplicateNamesGetSuffix) {
  const auto r = parse_layout_response("Objects: [('a tree', [0,0,5,5]), ('A tree', [9,9,5,5])]\nBackground prompt: x");
  ASSERT_EQ(r.layout.size(), 2u);
  EXPECT_EQ(r.layout[1].name, "A tree (2)");
}

TEST(ParseLayout, RenderRoundTripProperty) {
  std::mt19937 gen(17);
  std::uniform_real_distribution<double> u(0, 512);
  const std::vector<std::string> words = {"a red apple", "an owl", "the lamp", "a child's toy", "a blue truck"};
  for (int trial = 0; trial < 200; ++trial) {
    Layout lay;
    const int n = 1 + trial % 5;
    for (int i = 0; i < n; ++i) {
      const double x = trial % 2 ? u(gen) : std::round(u(gen));
      lay.push_back({words[static_cast<std::size_t>(i)], {x, u(gen), 1 + u(gen), 1 + u(gen)}});
    }
    const auto r = parse_layout_response(render_layout_text(lay, "bg words"));
    EXPECT_EQ(r.layout, lay);
    EXPECT_EQ(r.background_prompt, "bg words");
  }
}

TEST(ParseDescriptions, LivingRoomBlock) {
  const std::vector<std::string> names = {"a Golden Retriever", "a white cat", "a wooden table",
                                          "a vase of vibrant flowers", "a sleek modern television"};
  const auto d = parse_description_response(fixtures::kLivingRoomDescriptions, names);
  ASSERT_EQ(d.size(), 5u);
  EXPECT_EQ(d.at("a white cat"),
            "A realistic photo of a graceful and elegant white cat stretches leisurely, showcasing its pristine and "
            "fluffy fur.");
  EXPECT_EQ(d.at("a Golden Retriever"),
            "A realistic photo of a friendly and affectionate Golden Retriever with a soft, golden-furred coat and "
            "its warm eyes filled with joy.");
  EXPECT_EQ(d.at("a vase of vibrant flowers"),
            "A realistic photo of a vase of vibrant flowers adding a touch of freshness.");
  EXPECT_EQ(d.at("a sleek modern television"), "A realistic photo of a sleek modern television.");
}

TEST(ParseDescriptions, MissingNameFallsBack) {
  const auto d = parse_description_response("{a cat: A realistic photo of a cat.}", {"a rock"});
  EXPECT_EQ(d.at("a rock"), "A realistic photo of a rock");
}

TEST(ParseDescriptions, ArticleInsensitiveMatch) {
  const auto d = parse_description_response("{'the cat': 'A realistic photo of a tabby cat.'}", {"a cat"});
  EXPECT_EQ(d.at("a cat"), "A realistic photo of a tabby cat.");
  // Oracle: the match criterion is equality after lowercasing and dropping one leading article.
  EXPECT_EQ(normalize_name("the cat"), normalize_name("a cat"));
}

TEST(ParseDescriptions, JsonBlock) {
  const auto d = parse_description_response(R"(Here: {"a bird": "A realistic photo of a bird: small, blue."})",
                                            {"a bird"});
  EXPECT_EQ(d.at("a bird"), "A realistic photo of a bird: small, blue.");
}

TEST(ParseDescriptions, NoDictionary) {
  EXPECT_EQ(code_of([] { parse_description_response("no block here", {"a cat"}); }), Errc::no_dictionary_found);
  EXPECT_EQ(code_of([] { parse_description_response("{}", {"a cat"}); }), Errc::no_dictionary_found);
}

TEST(PromptTemplates, StemsAndSlots) {
  EXPECT_EQ(layout_prompt().text.rfind("You are an intelligent bounding box generator", 0), 0u);
  EXPECT_EQ(description_prompt().text.rfind("You are an intelligent description extractor", 0), 0u);
  const auto p = description_prompt().render("CAPTION", "a cat,a dog");
  EXPECT_NE(p.find("list of objects: [a cat,a dog]\ntext prompt: CAPTION\noutput:"), std::string::npos);
  EXPECT_NE(layout_prompt().render("CAP").find("Caption: CAP\nObjects:"), std::string::npos);
}

TEST(MockLlm, ReplaysThenRepeatsLast) {
  MockLlm one({"A"});
  for (int i = 0; i < 3; ++i) EXPECT_EQ(one.complete({"p", 0}), "A");
  MockLlm two({"A", "B"});
  EXPECT_EQ(two.complete({"p", 0}), "A");
  EXPECT_EQ(two.complete({"p", 0}), "B");
  for (int i = 0; i < 3; ++i) two.complete({"p", 0});
  EXPECT_EQ(two.call_count(), 5u);
  EXPECT_THROW(MockLlm({}), Error);
}

TEST(RequestLayouts, MockEchoesKReplies) {
  auto mock = mock_llm({fixtures::kFarmhouseLayout});
  const auto replies = request_layouts("a farm", 3, LlmConfig{}, *mock);
  ASSERT_EQ(replies.size(), 3u);
  for (const auto& r : replies) EXPECT_EQ(parse_layout_response(r).layout.size(), 4u);
  EXPECT_EQ(mock->call_count(), 3u);
  EXPECT_NE(mock->prompts()[0].find("Caption: a farm\nObjects:"), std::string::npos);
}

TEST(RequestLayouts, Preconditions) {
  auto mock = mock_llm({fixtures::kFarmhouseLayout});
  EXPECT_EQ(code_of([&] { request_layouts("a farm", 0, LlmConfig{}, *mock); }), Errc::precondition);
  EXPECT_EQ(code_of([&] { request_layouts("  ", 1, LlmConfig{}, *mock); }), Errc::precondition);
}

TEST(RequestLayouts, RetriesMalformedReplyOnce) {
  auto mock = mock_llm({"I cannot do that.", fixtures::kFarmhouseLayout});
  RequestStats stats;
  const auto replies = request_layouts("a farm", 1, LlmConfig{}, *mock, &stats);
  EXPECT_EQ(replies.size(), 1u);
  EXPECT_EQ(stats.retries, 1);
  EXPECT_EQ(mock->call_count(), 2u);
}

TEST(RequestLayouts, UnparsableAfterRetries) {
  auto mock = mock_llm({"nope"});
  LlmConfig cfg;
  cfg.max_retries = 2;
  EXPECT_EQ(code_of([&] { request_layouts("a farm", 1, cfg, *mock); }), Errc::unparsable_after_retries);
  EXPECT_EQ(mock->call_count(), 3u);
}

TEST(RequestDescriptions, MockBlockAndPreconditions) {
  auto mock = mock_llm({fixtures::kLivingRoomDescriptions});
  const std::vector<std::string> names = {"a Golden Retriever", "a white cat", "a wooden table",
                                          "a vase of vibrant flowers", "a sleek modern television"};
  const auto reply = request_descriptions("living room", names, LlmConfig{}, *mock);
  EXPECT_EQ(parse_description_response(reply, names).size(), 5u);
  EXPECT_EQ(code_of([&] { request_descriptions("living room", {}, LlmConfig{}, *mock); }), Errc::precondition);
  // A reply that omits a name is still accepted; the parser supplies the fallback.
  auto partial = mock_llm({"{a cat: A realistic photo of a cat.}"});
  EXPECT_NO_THROW(request_descriptions("x", {"a cat", "a rock"}, LlmConfig{}, *partial));
}

TEST(HttpChat, SendsProtocolAndRetriesTransportErrors) {
  int hits = 0;
  nlohmann::json seen_body;
  std::string seen_auth;
  ChatServer server([&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    seen_body = nlohmann::json::parse(req.body);
    seen_auth = req.get_header_value("Authorization");
    if (hits == 1) {
      res.status = 500;
      return;
    }
    res.set_content(completion(fixtures::kLandscapeLayout), "application/json");
  });
  ::setenv("SCENEGEN_TEST_KEY", "sk-sentinel-4242", 1);
  LlmConfig cfg;
  cfg.endpoint_url = server.url();
  cfg.api_key_env = "SCENEGEN_TEST_KEY";
  cfg.model_name = "test-model";

  std::string logs;
  auto old = Log::set_sink([&logs](LogLevel, std::string_view m) { logs += std::string(m) + "\n"; });
  Log::set_level(LogLevel::debug);
  HttpChatBackend backend(cfg);
  RequestStats stats;
  const auto replies = request_layouts("a landscape", 1, cfg, backend, &stats);
  Log::set_sink(old);
  Log::set_level(LogLevel::warn);

  ASSERT_EQ(replies.size(), 1u);
  EXPECT_EQ(replies[0], fixtures::kLandscapeLayout);
  EXPECT_EQ(stats.retries, 1);
  EXPECT_EQ(seen_body.at("model"), "test-model");
  EXPECT_DOUBLE_EQ(seen_body.at("temperature").get<double>(), 0.7);
  EXPECT_EQ(seen_body.at("messages")[0].at("role"), "user");
  EXPECT_EQ(seen_auth, "Bearer sk-sentinel-4242");
  EXPECT_FALSE(logs.empty());
  EXPECT_EQ(logs.find("sk-sentinel-4242"), std::string::npos);
}

TEST(HttpChat, AuthAndQuotaErrorsPassThroughWithoutRetry) {
  for (int status : {401, 429}) {
    int hits = 0;
    ChatServer server([&](const httplib::Request&, httplib::Response& res) {
      ++hits;
      res.status = status;
    });
    LlmConfig cfg;
    cfg.endpoint_url = server.url();
    HttpChatBackend backend(cfg);
    EXPECT_EQ(code_of([&] { request_layouts("x", 1, cfg, backend); }), Errc::quota_or_auth_error);
    EXPECT_EQ(hits, 1);
  }
}

TEST(HttpChat, TransportErrorAfterRetries) {
  LlmConfig cfg;
  cfg.endpoint_url = "http://127.0.0.1:9/v1/chat/completions";
  cfg.timeout_s = 0.5;
  cfg.max_retries = 1;
  HttpChatBackend backend(cfg);
  EXPECT_EQ(code_of([&] { request_layouts("x", 1, cfg, backend); }), Errc::transport_error);
}
