#include "ctxvul/templates.hpp"

#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace ctxvul {

TemplateSet load_templates(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw Error(ErrorCode::NotFound, "template directory not found: " + dir.string());
    TemplateSet t;
    t.profile_caller = read_file(dir / "phase1" / "profile_caller.txt");
    t.profile_callee = read_file(dir / "phase1" / "profile_callee.txt");
    t.profile_global = read_file(dir / "phase1" / "profile_global.txt");
    t.rank = read_file(dir / "phase1" / "rank.txt");
    t.reasoning_vulnerable = read_file(dir / "phase2" / "vulnerable.txt");
    t.reasoning_benign = read_file(dir / "phase2" / "benign.txt");
    t.detect = read_file(dir / "phase2" / "detect.txt");
    t.detect_binary = read_file(dir / "phase2" / "detect_binary.txt");
    return t;
}

std::string render_template(const std::string& text,
                            const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t open = text.find("{{", pos);
        if (open == std::string::npos) {
            out.append(text, pos, std::string::npos);
            break;
        }
        out.append(text, pos, open - pos);
        std::size_t close = text.find("}}", open + 2);
        if (close == std::string::npos)
            throw Error(ErrorCode::Config, "unterminated {{placeholder}} in template");
        std::string name = text.substr(open + 2, close - open - 2);
        auto it = vars.find(name);
        if (it == vars.end())
            throw Error(ErrorCode::Config, "template placeholder has no value: " + name);
        out += it->second;
        pos = close + 2;
    }
    return out;
}

}  // namespace ctxvul
