#pragma once

namespace reina {

// git-describe-style version baked in at configure time.
const char* version_string();

}  // namespace reina
