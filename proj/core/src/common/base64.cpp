#include "vbd/common/base64.hpp"

#include <algorithm>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "vbd/common/error.hpp"

namespace vbd {

namespace it = boost::archive::iterators;

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  using Encoder = it::base64_from_binary<it::transform_width<std::vector<std::uint8_t>::const_iterator, 6, 8>>;
  std::string out(Encoder(bytes.begin()), Encoder(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw ConfigError("base64: length is not a multiple of 4");
  }
  const auto pad = static_cast<std::size_t>(std::count(text.end() - std::min<std::size_t>(2, text.size()), text.end(), '='));
  std::string body(text.substr(0, text.size() - pad));
  body.append(pad, 'A');
  using Decoder = it::transform_width<it::binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::vector<std::uint8_t> out;
  try {
    out.assign(Decoder(body.cbegin()), Decoder(body.cend()));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("base64: ") + e.what());
  }
  out.resize(out.size() - pad);
  return out;
}

}  // namespace vbd
