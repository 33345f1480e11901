#include "cdpd/data/labels.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

namespace cdpd {

using nlohmann::json;

std::string render_task_prompt(const TaskRegistry& reg, const std::vector<int>& label_ids) {
    std::string out = "A task of segmenting ";
    for (size_t i = 0; i < label_ids.size(); ++i) {
        if (i > 0) out += (i + 1 == label_ids.size()) ? " and " : ", ";
        out += reg.global_labels[size_t(label_ids[i] - 1)];
    }
    return out;
}

std::string TaskRegistry::roi_prompt(int label_id_1based) const {
    CDPD_CHECK(label_id_1based >= 1 && label_id_1based <= label_count(), "label id ",
               label_id_1based, " out of range");
    const std::string& name = global_labels[size_t(label_id_1based - 1)];
    std::string out = roi_prompt_template;
    const auto pos = out.find("{}");
    CDPD_CHECK(pos != std::string::npos, "roi_prompt_template must contain '{}'");
    out.replace(pos, 2, name);
    return out;
}

void TaskRegistry::validate() const {
    CDPD_CHECK(!global_labels.empty(), "registry has no global labels");
    {
        std::set<std::string> seen;
        for (const auto& n : global_labels)
            CDPD_CHECK(seen.insert(n).second, "duplicate global label '", n, "'");
    }
    CDPD_CHECK(!tasks.empty(), "registry has no tasks");
    std::set<int> ids;
    for (const auto& t : tasks) {
        CDPD_CHECK(ids.insert(t.id).second, "duplicate task id ", t.id);
        CDPD_CHECK(!t.label_ids.empty(), "task ", t.id, " has an empty label set");
        CDPD_CHECK(i64(t.label_ids.size()) < label_count(), "task ", t.id,
                   " annotates every global label; the label set must be a strict subset");
        std::set<int> lids;
        for (int id : t.label_ids) {
            CDPD_CHECK(id >= 1 && id <= label_count(), "task ", t.id, ": label id ", id,
                       " out of range");
            CDPD_CHECK(lids.insert(id).second, "task ", t.id, ": duplicate label id ", id);
        }
    }
    for (int i = 1; i <= int(tasks.size()); ++i)
        CDPD_CHECK(ids.count(i), "task ids must be dense 1..", tasks.size(), "; missing ", i);
    for (const auto& [child, parent] : nested_in) {
        label_id(child);
        label_id(parent);
    }
}

u64 TaskRegistry::fingerprint() const {
    std::string canon = "labels:";
    for (const auto& l : global_labels) canon += l + ";";
    canon += "tasks:";
    for (const auto& t : tasks) {
        canon += std::to_string(t.id) + "=" + t.name + ":";
        for (int id : t.label_ids) canon += std::to_string(id) + ",";
        canon += "|" + t.task_prompt + ";";
    }
    canon += "nested:";
    for (const auto& [c, p] : nested_in) canon += c + ">" + p + ";";
    return fnv1a64(canon);
}

TaskRegistry load_registry(const std::string& path) {
    std::ifstream f(path);
    CDPD_CHECK(f.good(), "cannot open registry file ", path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        fail("registry ", path, ": invalid JSON: ", e.what());
    }
    TaskRegistry reg;
    CDPD_CHECK(j.contains("global_labels") && j["global_labels"].is_array(),
               "registry ", path, ": missing 'global_labels' array");
    for (const auto& l : j["global_labels"]) reg.global_labels.push_back(l.get<std::string>());
    if (j.contains("roi_prompt_template"))
        reg.roi_prompt_template = j["roi_prompt_template"].get<std::string>();
    if (j.contains("nested_in"))
        for (auto it = j["nested_in"].begin(); it != j["nested_in"].end(); ++it)
            reg.nested_in[it.key()] = it.value().get<std::string>();
    CDPD_CHECK(j.contains("tasks") && j["tasks"].is_array(), "registry ", path,
               ": missing 'tasks' array");
    for (const auto& tj : j["tasks"]) {
        TaskSpec t;
        t.id = tj.at("id").get<int>();
        t.name = tj.value("name", "task" + std::to_string(t.id));
        for (const auto& l : tj.at("labels")) {
            if (l.is_number_integer())
                t.label_ids.push_back(l.get<int>());
            else
                t.label_ids.push_back(reg.label_id(l.get<std::string>()));
        }
        std::sort(t.label_ids.begin(), t.label_ids.end());
        t.task_prompt = tj.value("task_prompt", "");
        if (t.task_prompt.empty()) t.task_prompt = render_task_prompt(reg, t.label_ids);
        reg.tasks.push_back(std::move(t));
    }
    std::sort(reg.tasks.begin(), reg.tasks.end(),
              [](const TaskSpec& a, const TaskSpec& b) { return a.id < b.id; });
    reg.validate();
    return reg;
}

void save_registry(const std::string& path, const TaskRegistry& reg) {
    json j;
    j["global_labels"] = reg.global_labels;
    j["roi_prompt_template"] = reg.roi_prompt_template;
    if (!reg.nested_in.empty()) j["nested_in"] = reg.nested_in;
    j["tasks"] = json::array();
    for (const auto& t : reg.tasks) {
        json tj;
        tj["id"] = t.id;
        tj["name"] = t.name;
        tj["labels"] = t.label_ids;
        tj["task_prompt"] = t.task_prompt;
        j["tasks"].push_back(tj);
    }
    std::ofstream f(path);
    CDPD_CHECK(f.good(), "cannot write registry file ", path);
    f << j.dump(2) << "\n";
}

MultiHotLabel to_multihot(const Tensor<i32>& lbl, const std::vector<int>& allowed,
                          const TaskRegistry& reg, bool nested) {
    CDPD_CHECK(lbl.rank() == 3, "to_multihot expects a {D,H,W} label grid");
    const i64 L = reg.label_count();
    std::vector<u8> allow(size_t(L) + 1, 0);
    for (int id : allowed) {
        CDPD_CHECK(id >= 1 && id <= L, "label id ", id, " out of range 1..", L);
        allow[size_t(id)] = 1;
    }
    // channel fan-out per label value (itself plus nested parents when enabled)
    std::vector<std::vector<i64>> fan(size_t(L) + 1);
    for (int v = 1; v <= int(L); ++v) {
        fan[size_t(v)].push_back(v - 1);
        if (nested) {
            std::string cur = reg.global_labels[size_t(v - 1)];
            int guard = 0;
            while (true) {
                auto it = reg.nested_in.find(cur);
                if (it == reg.nested_in.end()) break;
                const int pid = reg.label_id(it->second);
                if (allow[size_t(pid)]) fan[size_t(v)].push_back(pid - 1);
                cur = it->second;
                CDPD_CHECK(++guard <= int(L), "nested_in chain contains a cycle at '", cur, "'");
            }
        }
    }
    MultiHotLabel out(Shape{lbl.dim(0), lbl.dim(1), lbl.dim(2), L});
    const i64 n = lbl.numel();
    for (i64 i = 0; i < n; ++i) {
        const i32 v = lbl[i];
        if (v == 0) continue;
        CDPD_CHECK(v >= 1 && v <= L && allow[size_t(v)], "label value ", v,
                   " at voxel ", i, " is not in the task's label set");
        for (i64 ch : fan[size_t(v)]) out[i * L + ch] = 1;
    }
    return out;
}

} // namespace cdpd
