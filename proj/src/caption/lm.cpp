// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/caption/lm.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "volcap/error.hpp"
#include "volcap/tensor_io.hpp"

namespace volcap::caption {

using ag::Var;
using nlohmann::json;

std::vector<double> DifferentiableLM::next_logits(const Tensor& prefix, std::span<const int> tokens) const {
  ag::NoGradGuard guard;
  const Var logits = forward_logits(ag::constant(prefix), tokens);
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  const double* last = logits.value().data() + (rows - 1) * v;
  return std::vector<double>(last, last + v);
}

void TinyLMConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("tiny lm: vocabulary needs at least two entries");
  if (embed_dim == 0 || layers == 0 || mlp_hidden == 0 || max_positions == 0) {
    throw ConfigError("tiny lm: dimensions must be positive");
  }
  if (heads == 0 || embed_dim % heads != 0) throw ConfigError("tiny lm: embed_dim must be divisible by heads");
}

TinyLMConfig TinyLMConfig::from_json(const json& j) {
  TinyLMConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("tiny lm config: ") + e.what());
  }
  c.validate();
  return c;
}

json TinyLMConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"embed_dim", embed_dim},         {"layers", layers}, {"heads", heads},
          {"mlp_hidden", mlp_hidden}, {"max_positions", max_positions}, {"seed", seed}};
}

TinyLM::TinyLM(const TinyLMConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(config_.embed_dim));
  Tensor tok({config_.vocab_size, config_.embed_dim});
  for (double& v : tok.values()) v = rng.normal() * sd;
  token_emb_ = ag::parameter(std::move(tok));
  Tensor pos({config_.max_positions, config_.embed_dim});
  for (double& v : pos.values()) v = rng.normal() * 0.1 * sd;
  pos_emb_ = ag::parameter(std::move(pos));
  for (std::size_t i = 0; i < config_.layers; ++i) {
    blocks_.emplace_back(config_.embed_dim, config_.heads, config_.mlp_hidden, rng);
  }
  final_ln_ = ag::LayerNorm(config_.embed_dim);
}

Var TinyLM::forward_logits(const Var& prefix, std::span<const int> tokens) const {
  if (prefix.shape().size() != 2 || prefix.dim(1) != config_.embed_dim) {
    throw DimensionError("tiny lm: prefix must be K x " + std::to_string(config_.embed_dim) + ", got " +
                         shape_str(prefix.shape()));
  }
  const std::size_t len = prefix.dim(0) + tokens.size();
  if (len == 0) throw DimensionError("tiny lm: empty context");
  if (len > config_.max_positions) {
    throw DimensionError("tiny lm: context of " + std::to_string(len) + " exceeds max_positions " +
                         std::to_string(config_.max_positions));
  }
  Var x = tokens.empty() ? prefix : ag::concat_rows({prefix, ag::embedding(token_emb_, tokens)});
  std::vector<int> pos(len);
  std::iota(pos.begin(), pos.end(), 0);
  x = ag::add(x, ag::embedding(pos_emb_, pos));
  for (const auto& block : blocks_) x = block.forward(x, true);
  x = final_ln_.forward(x);
  return ag::matmul(x, ag::transpose(token_emb_));
}

void TinyLM::visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const {
  out.push_back({ag::join_name(prefix, "token_emb"), token_emb_});
  out.push_back({ag::join_name(prefix, "pos_emb"), pos_emb_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].visit_parameters(ag::join_name(prefix, "block" + std::to_string(i)), out);
  }
  final_ln_.visit_parameters(ag::join_name(prefix, "final_ln"), out);
}

namespace {

void write_all(int fd, const std::string& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw DependencyError("language model process closed its input");
    off += static_cast<std::size_t>(n);
  }
}

std::string read_exact(int fd, std::size_t count) {
  std::string buf(count, '\0');
  std::size_t off = 0;
  while (off < count) {
    const ssize_t n = ::read(fd, buf.data() + off, count - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw DependencyError("language model process ended its output mid-response");
    off += static_cast<std::size_t>(n);
  }
  return buf;
}

// Reads one VCT1 record from a pipe without over-reading.
Tensor read_record(int fd) {
  std::string bytes = read_exact(fd, 6);
  const auto dtype = static_cast<unsigned char>(bytes[4]);
  const auto rank = static_cast<unsigned char>(bytes[5]);
  const std::string shape = read_exact(fd, 4u * rank);
  bytes += shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    for (int b = 3; b >= 0; --b) d = (d << 8) | static_cast<unsigned char>(shape[4 * i + static_cast<std::size_t>(b)]);
    count *= d;
  }
  const std::size_t width = dtype == 0 ? 4 : dtype == 1 ? 8 : 1;
  bytes += read_exact(fd, count * width);
  std::istringstream in(bytes);
  auto rec = decode_tensor(in);
  if (!rec) throw DependencyError("language model process sent an empty response");
  return std::move(rec->tensor);
}

}  // namespace

ProcessLM::ProcessLM(std::vector<std::string> command, std::size_t vocab_size, std::size_t embed_dim)
    : command_(std::move(command)), vocab_size_(vocab_size), embed_dim_(embed_dim) {
  if (command_.empty()) throw ConfigError("process lm: empty command");
  // A dead child must surface as an error on write, not a signal.
  ::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2], out_pipe[2], status_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0 || ::pipe2(status_pipe, O_CLOEXEC) != 0) {
    throw DependencyError("process lm: cannot create pipes");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw DependencyError("process lm: fork failed");
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(status_pipe[0]);
    std::vector<char*> argv;
    for (auto& a : command_) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(status_pipe[1]);
  int err = 0;
  ssize_t n;
  do {
    n = ::read(status_pipe[0], &err, sizeof err);
  } while (n < 0 && errno == EINTR);
  ::close(status_pipe[0]);
  if (n > 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::waitpid(pid, nullptr, 0);
    throw DependencyError("cannot start language model process '" + command_[0] + "': " + std::strerror(err));
  }
  pid_ = pid;
  to_child_fd_ = in_pipe[1];
  from_child_fd_ = out_pipe[0];
}

ProcessLM::~ProcessLM() {
  if (to_child_fd_ >= 0) ::close(to_child_fd_);
  if (from_child_fd_ >= 0) ::close(from_child_fd_);
  if (pid_ > 0) ::waitpid(pid_, nullptr, 0);
}

std::vector<double> ProcessLM::next_logits(const Tensor& prefix, std::span<const int> tokens) const {
  if (prefix.rank() != 2 || prefix.dim(1) != embed_dim_) {
    throw DimensionError("process lm: prefix must be K x " + std::to_string(embed_dim_) + ", got " +
                         shape_str(prefix.shape()));
  }
  std::ostringstream req;
  encode_tensor(req, prefix);
  std::vector<double> ids(tokens.begin(), tokens.end());
  encode_tensor(req, Tensor::vector(std::move(ids)));
  write_all(to_child_fd_, req.str());
  Tensor logits = read_record(from_child_fd_);
  if (logits.rank() != 1 || logits.size() != vocab_size_) {
    throw DimensionError("process lm: expected " + std::to_string(vocab_size_) + " logits, got shape " +
                         shape_str(logits.shape()));
  }
  return logits.values();
}

void serve_lm(const DecoderLM& lm, std::istream& in, std::ostream& out) {
  while (true) {
    auto prefix = decode_tensor(in);
    if (!prefix) return;
    auto ids = decode_tensor(in);
    if (!ids) throw LoadError("lm server: request ended after the prefix");
    std::vector<int> tokens;
    for (double v : ids->tensor.values()) tokens.push_back(static_cast<int>(v));
    encode_tensor(out, Tensor::vector(lm.next_logits(prefix->tensor, tokens)));
    out.flush();
  }
}

}  // namespace volcap::caption
