#pragma once

#include <map>
#include <optional>
#include <vector>

#include "cdpd/core/rng.hpp"
#include "cdpd/core/tensor.hpp"

namespace cdpd {

// Global label ids are 1-based: integer label maps use value c for channel
// c-1, with 0 reserved for background. Channel order is the registry file's
// order and never re-sorted.

struct TaskSpec {
    int id = 0;
    std::string name;
    std::vector<int> label_ids; // sorted, 1-based, strict subset of L
    std::string task_prompt;
};

struct TaskRegistry {
    std::vector<std::string> global_labels;
    std::vector<TaskSpec> tasks;
    std::string roi_prompt_template = "A computerized tomography of a {}.";
    std::map<std::string, std::string> nested_in; // child label -> parent label

    i64 label_count() const { return i64(global_labels.size()); }
    i64 task_count() const { return i64(tasks.size()); }

    const TaskSpec& task(int id) const {
        for (const auto& t : tasks)
            if (t.id == id) return t;
        fail("unknown task id ", id, "; valid ids are 1..", tasks.size());
    }

    int label_id(const std::string& name) const {
        for (size_t i = 0; i < global_labels.size(); ++i)
            if (global_labels[i] == name) return int(i) + 1;
        fail("unknown label name '", name, "'");
    }

    std::string roi_prompt(int label_id_1based) const;
    void validate() const;
    u64 fingerprint() const;
};

// "A task of segmenting X, Y and Z", rendered from the task's label names.
std::string render_task_prompt(const TaskRegistry& reg, const std::vector<int>& label_ids);

TaskRegistry load_registry(const std::string& path);
void save_registry(const std::string& path, const TaskRegistry& reg);

using MultiHotLabel = Tensor<u8>;  // {D, H, W, |L|}
using PresenceMask = std::vector<u8>;

inline PresenceMask presence_mask(const TaskSpec& task, const TaskRegistry& reg) {
    PresenceMask m(size_t(reg.label_count()), 0);
    for (int id : task.label_ids) {
        CDPD_CHECK(id >= 1 && id <= reg.label_count(), "task ", task.id,
                   " references label id ", id, " outside the registry");
        m[size_t(id - 1)] = 1;
    }
    return m;
}

// Multi-hot transform of an integer label map restricted to `allowed` label
// ids. With nesting enabled, a child label's voxels also activate the parent
// channel (when the parent is in `allowed`).
MultiHotLabel to_multihot(const Tensor<i32>& lbl, const std::vector<int>& allowed,
                          const TaskRegistry& reg, bool nested = false);

inline MultiHotLabel to_multihot(const Tensor<i32>& lbl, const TaskSpec& task,
                                 const TaskRegistry& reg, bool nested = false) {
    return to_multihot(lbl, task.label_ids, reg, nested);
}

inline int uniform_task_sample(const TaskRegistry& reg, Rng& rng) {
    CDPD_CHECK(reg.task_count() >= 1, "registry has no tasks");
    return reg.tasks[size_t(rng.uniform_int(0, reg.task_count() - 1))].id;
}

} // namespace cdpd
