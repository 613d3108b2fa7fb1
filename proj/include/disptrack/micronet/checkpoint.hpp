#ifndef DISPTRACK_MICRONET_CHECKPOINT_HPP_
#define DISPTRACK_MICRONET_CHECKPOINT_HPP_

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "disptrack/kv_config.hpp"
#include "disptrack/micronet/dense.hpp"

namespace disptrack::micronet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named parameter blocks plus the config that produced them. The text form
/// stores doubles as hexfloats, so a round trip is bit-exact.
struct Checkpoint {
  KeyValueConfig config;
  std::vector<std::pair<std::string, DenseParams>> blocks;

  const DenseParams& block(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view text);

}  // namespace disptrack::micronet

#endif  // DISPTRACK_MICRONET_CHECKPOINT_HPP_
