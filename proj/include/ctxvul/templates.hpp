#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace ctxvul {

/// The prompt text assets the pipeline runs on. Phase 1 templates drive
/// context profiling and ranking; phase 2 templates drive reasoning-trace
/// generation and detection. All are swappable files, not code.
struct TemplateSet {
    std::string profile_caller;
    std::string profile_callee;
    std::string profile_global;
    std::string rank;
    std::string reasoning_vulnerable;  // no placeholders; data sections are
    std::string reasoning_benign;      // inserted by the prompt builder
    std::string detect;
    std::string detect_binary;
};

/// Loads the eight templates from <dir>/phase1 and <dir>/phase2.
TemplateSet load_templates(const std::filesystem::path& dir);

/// Replaces every {{name}} with vars.at(name). Unknown or unterminated
/// placeholders are config errors; extra vars are ignored.
std::string render_template(const std::string& text,
                            const std::map<std::string, std::string>& vars);

}  // namespace ctxvul
