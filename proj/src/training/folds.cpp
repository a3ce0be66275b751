#include <algorithm>
#include <set>
#include <stdexcept>

#include "aaa/random.hpp"
#include "aaa/training.hpp"

namespace aaa {

FoldRoles fold_roles(int n, int k) {
  if (k < 5)
    throw std::invalid_argument(
        "fold rotation needs at least 5 folds (3 train, 1 validation, 1 test)");
  if (n < 0 || n >= k)
    throw std::invalid_argument("fold rotation " + std::to_string(n) +
                                " out of range [0, " + std::to_string(k) + ")");
  FoldRoles r;
  r.train = {n % k, (n + 1) % k, (n + 2) % k};
  r.validation = (n + 3) % k;
  for (int f = 0; f < k; ++f)
    if (std::find(r.train.begin(), r.train.end(), f) == r.train.end() &&
        f != r.validation)
      r.test.push_back(f);
  return r;
}

int FoldPlan::fold_of(const std::string& study_id) const {
  auto it = assignment_.find(study_id);
  if (it == assignment_.end())
    throw std::out_of_range("study " + study_id + " is not in the fold plan");
  return it->second;
}

std::vector<std::string> FoldPlan::studies_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment_)
    if (f == fold) out.push_back(id);
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k_), 0);
  for (const auto& [id, f] : assignment_) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

FoldPlan make_folds(const std::vector<StudyRef>& studies, int k,
                    std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("need at least 2 folds");
  std::map<std::string, std::vector<std::string>> by_patient;
  std::set<std::string> seen;
  for (const auto& s : studies) {
    if (!seen.insert(s.study_id).second)
      throw std::invalid_argument("duplicate study id " + s.study_id);
    by_patient[s.patient_id].push_back(s.study_id);
  }
  if (by_patient.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument(
        "fewer patients (" + std::to_string(by_patient.size()) +
        ") than folds (" + std::to_string(k) + ")");

  std::vector<const std::vector<std::string>*> patients;
  for (const auto& [pid, ids] : by_patient) patients.push_back(&ids);
  Rng rng(seed);
  rng.shuffle(patients.begin(), patients.end());
  std::stable_sort(patients.begin(), patients.end(),
                   [](auto* a, auto* b) { return a->size() > b->size(); });

  std::vector<std::size_t> load(static_cast<std::size_t>(k), 0);
  std::map<std::string, int> assignment;
  for (const auto* ids : patients) {
    const auto fold = static_cast<std::size_t>(
        std::min_element(load.begin(), load.end()) - load.begin());
    load[fold] += ids->size();
    for (const auto& id : *ids) assignment[id] = static_cast<int>(fold);
  }
  return FoldPlan(k, std::move(assignment));
}

}  // namespace aaa
