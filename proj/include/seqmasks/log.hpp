#ifndef SEQMASKS_LOG_HPP_
#define SEQMASKS_LOG_HPP_

#include <sstream>
#include <string_view>

namespace seqmasks::log {

enum class Level { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kSilent = 4 };

void set_level(Level level);
Level level();
void write(Level level, std::string_view message);

// Stream-style line builder; the line is emitted on destruction.
class Line {
 public:
  explicit Line(Level level) : level_(level) {}
  ~Line() { write(level_, stream_.str()); }
  Line(const Line&) = delete;
  Line& operator=(const Line&) = delete;

  template <typename T>
  Line& operator<<(const T& value) {
    stream_ << value;
    return *this;
  }

 private:
  Level level_;
  std::ostringstream stream_;
};

inline Line info() { return Line(Level::kInfo); }
inline Line warn() { return Line(Level::kWarning); }
inline Line error() { return Line(Level::kError); }
inline Line debug() { return Line(Level::kDebug); }

}  // namespace seqmasks::log

#endif  // SEQMASKS_LOG_HPP_
