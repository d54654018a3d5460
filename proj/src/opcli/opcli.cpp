#include "ecig/opcli/opcli.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <httplib.h>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

namespace ecig::opcli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path default_token_file() {
  if (const char* x = std::getenv("ECIG_TOKEN_FILE")) return x;
  const char* home = std::getenv("HOME");
  return fs::path(home ? home : ".") / ".ecig" / "token";
}

struct Options {
  std::string server = "http://127.0.0.1:8080";
  std::string token;
  std::string token_file;
  std::string output = "human";
};

struct Response {
  int status = 0;  // 0: no response
  std::string body;
  std::string error;
};

class Session {
 public:
  Session(const Options& o, std::ostream& out, std::ostream& err)
      : opts_(o), out_(out), err_(err), client_(o.server) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(60);
  }

  bool machine() const { return opts_.output == "machine"; }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }

  std::string token() const {
    if (!opts_.token.empty()) return opts_.token;
    std::ifstream in(opts_.token_file);
    std::string t;
    in >> t;
    return t;
  }

  Response send(const std::string& method, const std::string& path, const std::string& body = {},
                const std::string& content_type = "application/json") {
    httplib::Headers headers;
    const std::string t = token();
    if (!t.empty()) headers.emplace("Authorization", "Bearer " + t);
    httplib::Result r = method == "GET" ? client_.Get(path, headers)
                                        : client_.Post(path, headers, body, content_type);
    Response resp;
    if (!r) {
      resp.error = httplib::to_string(r.error());
      return resp;
    }
    resp.status = r->status;
    resp.body = r->body;
    return resp;
  }

  // Prints the failure side of a response and returns the exit code.
  int fail(const Response& r) {
    if (r.status == 0) {
      err_ << "error: cannot reach " << opts_.server << ": " << r.error << "\n";
      return exit_code_for(0);
    }
    std::string code = "HTTP" + std::to_string(r.status);
    std::string reason;
    try {
      const json j = json::parse(r.body);
      if (j.contains("error")) code = j["error"].get<std::string>();
      else if (j.contains("status")) code = j["status"].get<std::string>();
      if (j.contains("reason")) reason = j["reason"].get<std::string>();
    } catch (const json::exception&) {
    }
    if (machine()) {
      out_ << "http " << r.status << "\n" << "error " << code << "\n";
      if (!reason.empty()) out_ << "reason " << reason << "\n";
    } else {
      err_ << "error (" << r.status << "): " << code;
      if (!reason.empty() && reason != code) err_ << ": " << reason;
      err_ << "\n";
    }
    return exit_code_for(r.status);
  }

 private:
  const Options& opts_;
  std::ostream& out_;
  std::ostream& err_;
  httplib::Client client_;
};

bool save_token(const fs::path& file, const std::string& token) {
  std::error_code ec;
  if (file.has_parent_path()) fs::create_directories(file.parent_path(), ec);
  const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) return false;
  ::fchmod(fd, 0600);
  const std::string line = token + "\n";
  const bool ok = ::write(fd, line.data(), line.size()) == static_cast<ssize_t>(line.size());
  ::close(fd);
  return ok;
}

int do_login(Session& s, const Options& o, const std::string& user, std::string password) {
  if (password.empty()) {
    if (const char* p = std::getenv("ECIG_PASSWORD")) password = p;
  }
  const auto r = s.send("POST", "/api/v1/auth/login", json{{"user", user}, {"password", password}}.dump());
  if (r.status != 200) return s.fail(r);
  const json j = json::parse(r.body);
  const std::string token = j.at("token").get<std::string>();
  if (!save_token(o.token_file, token)) {
    s.err() << "error: cannot write token file " << o.token_file << "\n";
    return 2;
  }
  if (s.machine()) {
    s.out() << "user " << j.at("user").get<std::string>() << "\n"
            << "role " << j.at("role").get<std::string>() << "\n"
            << "expires_at " << j.at("expires_at").get<std::int64_t>() << "\n";
  } else {
    s.out() << "logged in as " << j.at("user").get<std::string>() << " ("
            << j.at("role").get<std::string>() << ")\n";
  }
  return 0;
}

void print_payload(Session& s, const json& p) {
  if (p.contains("words")) {
    std::string line;
    for (const auto& w : p["words"]) line += (line.empty() ? "" : " ") + w.get<std::string>();
    s.out() << (s.machine() ? "words " : "") << line << "\n";
  }
  if (p.contains("addr")) {
    if (s.machine()) {
      s.out() << "written " << p["addr"].get<int>() << " " << p["count"].get<int>() << "\n";
    } else {
      s.out() << "wrote " << p["count"].get<int>() << " registers at " << p["addr"].get<int>() << "\n";
    }
  }
  if (p.contains("proof")) {
    s.out() << (s.machine() ? "digest " : "image sha256 ") << p["digest"].get<std::string>() << "\n"
            << (s.machine() ? "proof " : "install proof ") << p["proof"].get<std::string>() << "\n";
  }
  if (p.contains("records")) {
    for (const auto& r : p["records"]) {
      s.out() << (s.machine() ? "record " : "stored record ") << r["record_id"].get<std::uint64_t>()
              << " " << r["category"].get<std::string>() << " asset " << r["asset"].get<std::uint32_t>()
              << "\n";
    }
  }
  if (p.contains("profile_id")) {
    s.out() << (s.machine() ? "profile " : "threat profile ") << p["profile_id"].get<std::uint64_t>()
            << "\n";
  }
}

int do_cmd(Session& s, const std::string& line) {
  const auto r = s.send("POST", "/api/v1/command", json{{"command", line}}.dump());
  if (r.status != 200) return s.fail(r);
  const json j = json::parse(r.body);
  if (s.machine()) s.out() << "status Ok\n";
  print_payload(s, j.value("payload", json::object()));
  return 0;
}

int do_upload(Session& s, const std::string& file, std::string name) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    s.err() << "error: cannot read " << file << "\n";
    return 1;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  if (name.empty()) name = fs::path(file).filename().string();
  const auto r = s.send("POST", "/api/v1/firmware/" + httplib::detail::encode_url(name), ss.str(),
                        "application/octet-stream");
  if (r.status != 200) return s.fail(r);
  const json j = json::parse(r.body);
  if (s.machine()) {
    s.out() << "name " << j["name"].get<std::string>() << "\n"
            << "size " << j["size"].get<std::uint64_t>() << "\n"
            << "sha256 " << j["sha256"].get<std::string>() << "\n";
  } else {
    s.out() << "staged " << j["name"].get<std::string>() << " (" << j["size"].get<std::uint64_t>()
            << " bytes, sha256 " << j["sha256"].get<std::string>() << ")\n";
  }
  return 0;
}

int do_records(Session& s, const std::optional<std::uint32_t>& asset, const std::string& category,
               const std::optional<std::int64_t>& from, const std::optional<std::int64_t>& to) {
  httplib::Params params;
  if (asset) params.emplace("asset", std::to_string(*asset));
  if (!category.empty()) params.emplace("category", category);
  if (from) params.emplace("from", std::to_string(*from));
  if (to) params.emplace("to", std::to_string(*to));
  const std::string query = httplib::detail::params_to_query_str(params);
  const auto r = s.send("GET", "/api/v1/records" + (query.empty() ? "" : "?" + query));
  if (r.status != 200) return s.fail(r);
  const json j = json::parse(r.body);
  for (const auto& rec : j.at("records")) {
    if (s.machine()) {
      s.out() << "record " << rec["record_id"].get<std::uint64_t>() << " "
              << rec["asset"].get<std::uint32_t>() << " " << rec["category"].get<std::string>() << " "
              << rec["captured_at"].get<std::int64_t>() << " " << rec["snapshot"].size() << "\n";
    } else {
      s.out() << "#" << rec["record_id"].get<std::uint64_t>() << " asset "
              << rec["asset"].get<std::uint32_t>() << " " << rec["category"].get<std::string>()
              << " at " << rec["captured_at"].get<std::int64_t>() << ", " << rec["snapshot"].size()
              << " registers\n";
    }
  }
  if (!s.machine() && j.at("records").empty()) s.out() << "no records\n";
  return 0;
}

int do_profiles(Session& s, const std::string& selector) {
  const auto r = s.send("GET", "/api/v1/threat-profiles/" + selector);
  if (r.status != 200) return s.fail(r);
  if (s.machine()) {
    s.out() << r.body << "\n";
    return 0;
  }
  const json j = json::parse(r.body);
  const auto& sys = j.at("system");
  s.out() << "terminal records " << j["root"]["terminal_records"].get<std::uint64_t>() << "\n"
          << "availability " << sys["availability"].get<double>() << ", failure rate "
          << sys["failure_rate"].get<double>() << ", avg latency "
          << sys["avg_latency_ms"].get<double>() << " ms\n";
  for (const auto& [principal, node] : j.at("clients").items()) {
    s.out() << principal << "\n";
    for (const auto& [activity, leaf] : node.at("activities").items()) {
      s.out() << "  " << activity << ": " << leaf["count"].get<std::uint64_t>() << " ("
              << leaf["ok"].get<std::uint64_t>() << " ok, " << leaf["denied"].get<std::uint64_t>()
              << " denied, " << leaf["failed"].get<std::uint64_t>() << " failed)\n";
    }
  }
  for (const auto& a : j.value("anomalies", json::array())) {
    s.out() << "anomaly " << a["path"].get<std::string>() << " " << a["metric"].get<std::string>()
            << " [" << a["element"].get<std::string>() << "]\n";
  }
  return 0;
}

}  // namespace

int exit_code_for(int http_status) noexcept {
  if (http_status >= 200 && http_status < 300) return 0;
  if (http_status >= 400 && http_status < 500) return 1;
  return 2;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Operator client for the edge gateway", "opcli"};
  Options o;
  if (const char* s = std::getenv("ECIG_SERVER")) o.server = s;
  o.token_file = default_token_file().string();
  app.add_option("--server", o.server, "Gateway base URL");
  app.add_option("--token", o.token, "Bearer token (overrides the token file)");
  app.add_option("--token-file", o.token_file, "Where login stores the token");
  app.add_option("--output", o.output, "human or machine")->check(CLI::IsMember({"human", "machine"}));
  app.require_subcommand(1);

  std::string user, password;
  auto* login = app.add_subcommand("login", "Authenticate and cache a token");
  login->add_option("--user,-u", user)->required();
  login->add_option("--password,-p", password, "Defaults to $ECIG_PASSWORD");

  std::string line;
  auto* cmd = app.add_subcommand("cmd", "Submit one command line");
  cmd->add_option("line", line)->required();

  std::string file, name;
  auto* upload = app.add_subcommand("upload", "Stage a firmware image");
  upload->add_option("file", file)->required();
  upload->add_option("--name", name, "Staged name (defaults to the file name)");

  std::optional<std::uint32_t> asset;
  std::string category;
  std::optional<std::int64_t> from, to;
  auto* records = app.add_subcommand("records", "List stored records");
  records->add_option("--asset", asset);
  records->add_option("--category", category)
      ->check(CLI::IsMember({"confidential", "non-confidential"}));
  records->add_option("--from", from, "Epoch milliseconds");
  records->add_option("--to", to, "Epoch milliseconds");

  std::string selector = "latest";
  auto* profiles = app.add_subcommand("profiles", "Fetch a threat profile");
  profiles->add_option("selector", selector, "latest or a profile id");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  Session s(o, out, err);
  try {
    if (*login) return do_login(s, o, user, password);
    if (*cmd) return do_cmd(s, line);
    if (*upload) return do_upload(s, file, name);
    if (*records) return do_records(s, asset, category, from, to);
    if (*profiles) return do_profiles(s, selector);
  } catch (const json::exception& e) {
    err << "error: unexpected response: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ecig::opcli
