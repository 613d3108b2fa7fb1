#include <stdexcept>
#include <string>

#include "disptrack/pipeline.hpp"

namespace disptrack {
namespace {

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

void check_widths(const std::vector<int>& widths, const std::string& name) {
  if (widths.empty()) throw std::invalid_argument(name + ": needs at least one width");
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument(name + ": widths must be positive");
  }
}

void check_sa(const SaSettings& sa, const std::string& name) {
  if (sa.samples < 1) throw std::invalid_argument(name + ": samples must be >= 1");
  if (!(sa.radius > 0.0)) throw std::invalid_argument(name + ": radius must be > 0");
  if (sa.neighbor_cap < 1) throw std::invalid_argument(name + ": neighbor_cap must be >= 1");
  check_widths(sa.widths, name);
}

SaSettings read_sa(const KeyValueConfig& cfg, const std::string& prefix, SaSettings sa) {
  sa.samples = cfg.get_uint(prefix + ".samples", sa.samples);
  sa.radius = cfg.get_double(prefix + ".radius", sa.radius);
  sa.neighbor_cap = cfg.get_uint(prefix + ".neighbor_cap", sa.neighbor_cap);
  sa.widths = cfg.get_ints(prefix + ".widths", sa.widths);
  return sa;
}

void write_sa(KeyValueConfig& cfg, const std::string& prefix, const SaSettings& sa) {
  cfg.set(prefix + ".samples", std::to_string(sa.samples));
  cfg.set(prefix + ".radius", format_double(sa.radius));
  cfg.set(prefix + ".neighbor_cap", std::to_string(sa.neighbor_cap));
  cfg.set(prefix + ".widths", join_ints(sa.widths));
}

}  // namespace

void PipelineConfig::validate() const {
  if (n_input < 1) throw std::invalid_argument("n_input must be >= 1");
  if (n_filtered < 1 || n_filtered > n_input) {
    throw std::invalid_argument("n_filtered must be in [1, n_input]");
  }
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0, 1)");
  check_sa(sa1, "sa1");
  check_sa(sa2, "sa2");
  check_sa(sa3, "sa3");
  check_widths(assoc_widths, "assoc");
  check_widths(fp1_widths, "fp1");
  check_widths(fp2_widths, "fp2");
  check_widths(fp3_widths, "fp3");
  check_widths(head_widths, "head");
  if (head_widths.back() != 3) throw std::invalid_argument("head: last width must be 3");
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("alpha and beta must be >= 0");
  if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
  if (!(lr_low > 0.0) || lr_high < lr_low) {
    throw std::invalid_argument("learning rates must satisfy 0 < lr_low <= lr_high");
  }
  if (clr_cycle_epochs < 1) throw std::invalid_argument("clr_cycle_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& cfg) {
  std::vector<std::string> known{"n_input", "n_filtered", "k", "fusion", "tau", "seed",
                                 "assoc.widths", "fp1.widths", "fp2.widths", "fp3.widths",
                                 "head.widths", "alpha", "beta", "gamma", "lr_low",
                                 "lr_high", "clr_cycle_epochs", "batch_size", "adam_beta1",
                                 "adam_beta2", "adam_epsilon"};
  for (const char* sa : {"sa1", "sa2", "sa3"}) {
    for (const char* field : {".samples", ".radius", ".neighbor_cap", ".widths"}) {
      known.push_back(std::string(sa) + field);
    }
  }
  cfg.require_known(known);

  PipelineConfig c;
  c.n_input = cfg.get_uint("n_input", c.n_input);
  c.n_filtered = cfg.get_uint("n_filtered", c.n_filtered);
  c.k = cfg.get_uint("k", c.k);
  c.fusion = micronet::parse_fusion(cfg.get_string("fusion", micronet::to_string(c.fusion)));
  c.tau = cfg.get_double("tau", c.tau);
  c.seed = cfg.get_uint("seed", c.seed);
  c.sa1 = read_sa(cfg, "sa1", c.sa1);
  c.sa2 = read_sa(cfg, "sa2", c.sa2);
  c.sa3 = read_sa(cfg, "sa3", c.sa3);
  c.assoc_widths = cfg.get_ints("assoc.widths", c.assoc_widths);
  c.fp1_widths = cfg.get_ints("fp1.widths", c.fp1_widths);
  c.fp2_widths = cfg.get_ints("fp2.widths", c.fp2_widths);
  c.fp3_widths = cfg.get_ints("fp3.widths", c.fp3_widths);
  c.head_widths = cfg.get_ints("head.widths", c.head_widths);
  c.alpha = cfg.get_double("alpha", c.alpha);
  c.beta = cfg.get_double("beta", c.beta);
  c.gamma = cfg.get_double("gamma", c.gamma);
  c.lr_low = cfg.get_double("lr_low", c.lr_low);
  c.lr_high = cfg.get_double("lr_high", c.lr_high);
  c.clr_cycle_epochs = cfg.get_uint("clr_cycle_epochs", c.clr_cycle_epochs);
  c.batch_size = cfg.get_uint("batch_size", c.batch_size);
  c.adam_beta1 = cfg.get_double("adam_beta1", c.adam_beta1);
  c.adam_beta2 = cfg.get_double("adam_beta2", c.adam_beta2);
  c.adam_epsilon = cfg.get_double("adam_epsilon", c.adam_epsilon);
  c.validate();
  return c;
}

KeyValueConfig PipelineConfig::to_config() const {
  KeyValueConfig cfg;
  cfg.set("n_input", std::to_string(n_input));
  cfg.set("n_filtered", std::to_string(n_filtered));
  cfg.set("k", std::to_string(k));
  cfg.set("fusion", micronet::to_string(fusion));
  cfg.set("tau", format_double(tau));
  cfg.set("seed", std::to_string(seed));
  write_sa(cfg, "sa1", sa1);
  write_sa(cfg, "sa2", sa2);
  write_sa(cfg, "sa3", sa3);
  cfg.set("assoc.widths", join_ints(assoc_widths));
  cfg.set("fp1.widths", join_ints(fp1_widths));
  cfg.set("fp2.widths", join_ints(fp2_widths));
  cfg.set("fp3.widths", join_ints(fp3_widths));
  cfg.set("head.widths", join_ints(head_widths));
  cfg.set("alpha", format_double(alpha));
  cfg.set("beta", format_double(beta));
  cfg.set("gamma", format_double(gamma));
  cfg.set("lr_low", format_double(lr_low));
  cfg.set("lr_high", format_double(lr_high));
  cfg.set("clr_cycle_epochs", std::to_string(clr_cycle_epochs));
  cfg.set("batch_size", std::to_string(batch_size));
  cfg.set("adam_beta1", format_double(adam_beta1));
  cfg.set("adam_beta2", format_double(adam_beta2));
  cfg.set("adam_epsilon", format_double(adam_epsilon));
  return cfg;
}

}  // namespace disptrack
