#include "danlab.h"

#include <cstring>
#include <exception>
#include <string>

#include "danlab/config.hpp"
#include "danlab/error.hpp"
#include "danlab/harness.hpp"
#include "danlab/io.hpp"
#include "danlab/oracle.hpp"

struct danlab_config {
  danlab::config::ExperimentConfig cfg;
  std::string source;
};

struct danlab_batch {
  danlab::ods::TrajectoryBatch batch;
};

struct danlab_params {
  danlab::dan::DanParams params;
};

namespace {

thread_local std::string last_error;
thread_local std::string scratch;

danlab_status fail(danlab_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

danlab_status code_of(danlab::ErrorCode code) {
  return static_cast<danlab_status>(static_cast<int>(code));
}

// Runs body, translating exceptions into status codes. context is
// prefixed to the message (usually the config source).
template <typename F>
danlab_status guarded(const std::string& context, F&& body) {
  const std::string prefix = context.empty() ? "" : context + ": ";
  try {
    body();
    last_error.clear();
    return DANLAB_OK;
  } catch (const danlab::Error& e) {
    return fail(code_of(e.code()), prefix + e.what());
  } catch (const std::bad_alloc&) {
    return fail(DANLAB_ERR_INTERNAL, prefix + "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DANLAB_ERR_IO, prefix + e.what());
  } catch (const std::exception& e) {
    return fail(DANLAB_ERR_INTERNAL, prefix + e.what());
  }
}

danlab::harness::Log make_log(danlab_log_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

std::string config_context(const danlab_config* cfg) {
  return cfg->source.empty() ? "config" : "config " + cfg->source;
}

}  // namespace

extern "C" {

const char* danlab_last_error(void) { return last_error.c_str(); }

const char* danlab_status_name(danlab_status status) {
  switch (status) {
    case DANLAB_OK: return "ok";
    case DANLAB_ERR_CONFIG: return "config error";
    case DANLAB_ERR_NUMERICAL: return "numerical failure";
    case DANLAB_ERR_ORACLE: return "oracle check failed";
    case DANLAB_ERR_FORMAT: return "format error";
    case DANLAB_ERR_IO: return "i/o error";
    case DANLAB_ERR_SHAPE: return "shape error";
    case DANLAB_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int danlab_exit_code(danlab_status status) {
  switch (status) {
    case DANLAB_OK: return 0;
    case DANLAB_ERR_NUMERICAL: return 2;
    case DANLAB_ERR_ORACLE: return 3;
    default: return 1;
  }
}

danlab_status danlab_config_load(const char* path, danlab_config** out) {
  if (!path || !out) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded("config " + std::string(path), [&] {
    auto* handle = new danlab_config{danlab::config::load(path), path};
    *out = handle;
  });
}

danlab_status danlab_config_parse(const char* text, danlab_config** out) {
  if (!text || !out) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded("config", [&] { *out = new danlab_config{danlab::config::parse(text), ""}; });
}

danlab_status danlab_config_set_seed(danlab_config* cfg, uint64_t seed) {
  if (!cfg) return fail(DANLAB_ERR_CONFIG, "null config");
  return guarded(config_context(cfg), [&] {
    cfg->cfg.seed = seed;
    cfg->cfg.finalize();
  });
}

danlab_status danlab_config_set_out(danlab_config* cfg, const char* dir) {
  if (!cfg || !dir) return fail(DANLAB_ERR_CONFIG, "null argument");
  cfg->cfg.out = dir;
  return DANLAB_OK;
}

danlab_status danlab_config_set_threads(danlab_config* cfg, int threads) {
  if (!cfg) return fail(DANLAB_ERR_CONFIG, "null config");
  if (threads < 1) return fail(DANLAB_ERR_CONFIG, config_context(cfg) + ": threads must be >= 1");
  cfg->cfg.threads = threads;
  return DANLAB_OK;
}

const char* danlab_config_out(const danlab_config* cfg) { return cfg ? cfg->cfg.out.c_str() : ""; }

uint64_t danlab_config_seed(const danlab_config* cfg) { return cfg ? cfg->cfg.seed : 0; }

const char* danlab_config_text(const danlab_config* cfg) {
  if (!cfg) return "";
  scratch = danlab::config::to_text(cfg->cfg);
  return scratch.c_str();
}

void danlab_config_free(danlab_config* cfg) { delete cfg; }

danlab_status danlab_batch_generate(const danlab_config* cfg, int64_t count, int64_t horizon, danlab_batch** out) {
  if (!cfg || !out) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded(config_context(cfg), [&] {
    if (count < 1 || horizon < 0) throw danlab::ConfigError("need I >= 1 and T >= 0");
    *out = new danlab_batch{danlab::ods::generate_batch(cfg->cfg.ods, count, horizon, danlab::stream::kTrain,
                                                        cfg->cfg.threads)};
  });
}

danlab_status danlab_batch_read(const char* path, danlab_batch** out) {
  if (!path || !out) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded(path, [&] { *out = new danlab_batch{danlab::io::read_batch(path)}; });
}

danlab_status danlab_batch_write(const danlab_batch* batch, const char* path) {
  if (!batch || !path) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded(path, [&] { danlab::io::write_batch(batch->batch, path); });
}

danlab_status danlab_batch_shape(const danlab_batch* batch, int64_t* count, int64_t* steps, int64_t* n, int64_t* d) {
  if (!batch) return fail(DANLAB_ERR_CONFIG, "null batch");
  if (count) *count = batch->batch.count();
  if (steps) *steps = batch->batch.steps();
  if (n) *n = batch->batch.n();
  if (d) *d = batch->batch.d();
  return DANLAB_OK;
}

danlab_status danlab_batch_state(const danlab_batch* batch, int64_t i, int64_t t, double* out) {
  if (!batch || !out) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded("", [&] {
    if (i < 0 || i >= batch->batch.count() || t < 0 || t >= batch->batch.steps()) {
      throw danlab::ShapeError("trajectory index out of range");
    }
    const auto v = batch->batch.state(i, t);
    std::memcpy(out, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  });
}

danlab_status danlab_batch_observation(const danlab_batch* batch, int64_t i, int64_t t, double* out) {
  if (!batch || !out) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded("", [&] {
    if (i < 0 || i >= batch->batch.count() || t < 0 || t >= batch->batch.steps()) {
      throw danlab::ShapeError("trajectory index out of range");
    }
    const auto v = batch->batch.observation(i, t);
    std::memcpy(out, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  });
}

void danlab_batch_free(danlab_batch* batch) { delete batch; }

danlab_status danlab_params_init(const danlab_config* cfg, danlab_params** out) {
  if (!cfg || !out) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded(config_context(cfg),
                 [&] { *out = new danlab_params{danlab::dan::init_params(cfg->cfg.dan, cfg->cfg.seed)}; });
}

danlab_status danlab_params_read(const char* path, danlab_params** out) {
  if (!path || !out) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded(path, [&] { *out = new danlab_params{danlab::io::read_params(path)}; });
}

danlab_status danlab_params_write(const danlab_params* params, const char* path) {
  if (!params || !path) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded(path, [&] { danlab::io::write_params(params->params, path); });
}

int64_t danlab_params_size(const danlab_params* params) { return params ? params->params.size() : 0; }

const double* danlab_params_data(const danlab_params* params) {
  return params ? params->params.theta().data() : nullptr;
}

void danlab_params_free(danlab_params* params) { delete params; }

danlab_status danlab_run_gen(const danlab_config* cfg, int64_t count, int64_t horizon, const char* path) {
  if (!cfg || !path) return fail(DANLAB_ERR_CONFIG, "null argument");
  return guarded(config_context(cfg), [&] {
    if (count < 1 || horizon < 0) throw danlab::ConfigError("need I >= 1 and T >= 0");
    danlab::harness::run_generate(cfg->cfg, count, horizon, path);
  });
}

danlab_status danlab_run_train(const danlab_config* cfg, const char* out_dir, danlab_log_fn log, void* user) {
  if (!cfg) return fail(DANLAB_ERR_CONFIG, "null config");
  const std::string dir = out_dir ? out_dir : cfg->cfg.out;
  return guarded(config_context(cfg), [&] { danlab::harness::run_twin_experiment(cfg->cfg, dir, make_log(log, user)); });
}

danlab_status danlab_run_test(const danlab_config* cfg, const char* checkpoint, const char* out_dir,
                              danlab_log_fn log, void* user) {
  if (!cfg) return fail(DANLAB_ERR_CONFIG, "null config");
  const std::string dir = out_dir ? out_dir : cfg->cfg.out;
  const std::string ckpt = checkpoint ? checkpoint : (std::filesystem::path(dir) / "final.danparm").string();
  return guarded(config_context(cfg),
                 [&] { danlab::harness::run_checkpoint_test(cfg->cfg, ckpt, dir, make_log(log, user)); });
}

danlab_status danlab_run_baseline(const danlab_config* cfg, const char* out_dir, danlab_log_fn log, void* user) {
  if (!cfg) return fail(DANLAB_ERR_CONFIG, "null config");
  const std::string dir = out_dir ? out_dir : cfg->cfg.out;
  return guarded(config_context(cfg), [&] { danlab::harness::run_baseline(cfg->cfg, dir, make_log(log, user)); });
}

danlab_status danlab_run_oracle(uint64_t seed, danlab_log_fn log, void* user) {
  danlab::oracle::Report report;
  const danlab_status status =
      guarded("oracle", [&] { report = danlab::oracle::run_oracle_suite({}, seed, make_log(log, user)); });
  if (status != DANLAB_OK) return status;
  if (!report.passed()) {
    std::string names;
    for (const auto& name : report.failed()) names += (names.empty() ? "" : ", ") + name;
    return fail(DANLAB_ERR_ORACLE, "failed checks: " + names);
  }
  return DANLAB_OK;
}

}  // extern "C"
