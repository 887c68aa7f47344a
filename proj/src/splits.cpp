#include "qeye/splits.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "qeye/random.hpp"

namespace qeye {

std::string to_string(Portion p) {
  switch (p) {
    case Portion::Train: return "train";
    case Portion::Val: return "val";
    case Portion::TestNewParticipant: return "test_new_participant";
    case Portion::TestNewItem: return "test_new_item";
    case Portion::TestBoth: return "test_both";
  }
  return "?";
}

Portion parse_portion(const std::string& s) {
  for (auto p : {Portion::Train, Portion::Val, Portion::TestNewParticipant, Portion::TestNewItem, Portion::TestBoth}) {
    if (to_string(p) == s) return p;
  }
  throw ParseError("unknown split portion '" + s + "'");
}

bool is_test(Portion p) { return p != Portion::Train && p != Portion::Val; }

BatchTrial to_batch_trial(const Trial& t) {
  return {t.trial_id, t.participant_id, t.article_id, t.paragraph_id, t.question.question_id, t.regime, t.starc_label};
}

void BatchSpec::validate() const {
  std::set<std::pair<std::string, std::string>> cells;
  for (const auto& t : trials) {
    if (!cells.emplace(t.participant_id, t.paragraph_id).second) {
      throw ValidationError("batch " + batch_id + ": participant " + t.participant_id + " has two trials on paragraph " +
                            t.paragraph_id);
    }
  }
}

std::vector<BatchSpec> infer_batches(const std::vector<Trial>& trials) {
  // Union-find over participants and articles.
  std::map<std::string, std::string> parent;
  std::function<std::string(const std::string&)> find = [&](const std::string& x) -> std::string {
    auto it = parent.find(x);
    if (it == parent.end()) {
      parent[x] = x;
      return x;
    }
    if (it->second == x) return x;
    std::string r = find(it->second);
    parent[x] = r;
    return r;
  };
  auto unite = [&](const std::string& a, const std::string& b) {
    auto ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  };
  for (const auto& t : trials) unite("p:" + t.participant_id, "a:" + t.article_id);

  std::map<std::string, BatchSpec> by_root;
  for (const auto& t : trials) {
    auto& b = by_root[find("a:" + t.article_id)];
    b.trials.push_back(to_batch_trial(t));
  }
  std::vector<BatchSpec> out;
  for (auto& [root, b] : by_root) {
    std::set<std::string> arts, parts;
    for (const auto& t : b.trials) {
      arts.insert(t.article_id);
      parts.insert(t.participant_id);
    }
    b.article_ids.assign(arts.begin(), arts.end());
    b.participant_ids.assign(parts.begin(), parts.end());
    out.push_back(std::move(b));
  }
  std::sort(out.begin(), out.end(), [](const BatchSpec& a, const BatchSpec& b) { return a.article_ids < b.article_ids; });
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].batch_id = "batch" + std::to_string(i);
    out[i].validate();
  }
  return out;
}

std::vector<std::string> SplitPlan::trials_in(Portion p) const {
  std::vector<std::string> out;
  for (const auto& [id, q] : assignment) {
    if (q == p) out.push_back(id);
  }
  return out;
}

std::size_t SplitPlan::count(Portion p) const {
  return static_cast<std::size_t>(
      std::count_if(assignment.begin(), assignment.end(), [p](const auto& kv) { return kv.second == p; }));
}

namespace {

std::size_t chunk_begin(std::size_t k, std::size_t n, std::size_t folds) { return k * n / folds; }

}  // namespace

std::vector<SplitPlan> make_folds(const BatchSpec& batch, Regime regime, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError("n_folds must be at least 2");
  const auto folds = static_cast<std::size_t>(n_folds);
  if (folds > batch.article_ids.size() || folds > batch.participant_ids.size()) {
    throw ConfigError("n_folds " + std::to_string(n_folds) + " exceeds article (" +
                      std::to_string(batch.article_ids.size()) + ") or participant (" +
                      std::to_string(batch.participant_ids.size()) + ") count of " + batch.batch_id);
  }
  std::vector<std::string> articles = batch.article_ids;
  std::sort(articles.begin(), articles.end());
  std::vector<std::string> participants = batch.participant_ids;
  std::sort(participants.begin(), participants.end());
  // Participant order depends on the seed only, so both regimes share hold-outs.
  Rng prng(mix_seed(seed, 0x70617274ull));
  prng.shuffle(participants);

  std::vector<const BatchTrial*> scoped;
  for (const auto& t : batch.trials) {
    if (t.regime == regime) scoped.push_back(&t);
  }
  std::sort(scoped.begin(), scoped.end(), [](auto* a, auto* b) { return a->trial_id < b->trial_id; });

  std::vector<SplitPlan> plans;
  for (std::size_t k = 0; k < folds; ++k) {
    std::set<std::string> held_articles(articles.begin() + static_cast<std::ptrdiff_t>(chunk_begin(k, articles.size(), folds)),
                                        articles.begin() + static_cast<std::ptrdiff_t>(chunk_begin(k + 1, articles.size(), folds)));
    std::set<std::string> held_participants(
        participants.begin() + static_cast<std::ptrdiff_t>(chunk_begin(k, participants.size(), folds)),
        participants.begin() + static_cast<std::ptrdiff_t>(chunk_begin(k + 1, participants.size(), folds)));

    SplitPlan plan;
    plan.fold_id = static_cast<int>(k);
    plan.regime_filter = regime;
    std::array<std::vector<const BatchTrial*>, 4> retained_by_class;
    std::size_t retained = 0;
    for (const auto* t : scoped) {
      const bool hp = held_participants.count(t->participant_id) > 0;
      const bool ha = held_articles.count(t->article_id) > 0;
      if (hp && ha) plan.assignment[t->trial_id] = Portion::TestBoth;
      else if (hp) plan.assignment[t->trial_id] = Portion::TestNewParticipant;
      else if (ha) plan.assignment[t->trial_id] = Portion::TestNewItem;
      else {
        plan.assignment[t->trial_id] = Portion::Train;
        retained_by_class[static_cast<int>(t->starc)].push_back(t);
        ++retained;
      }
    }

    // Largest-remainder allocation of the validation quota across answer types.
    const auto target = std::min<std::size_t>(
        retained, static_cast<std::size_t>(std::llround(kValidationFraction * static_cast<double>(scoped.size()))));
    std::array<std::size_t, 4> quota{};
    std::array<double, 4> remainder{};
    std::size_t assigned = 0;
    for (int c = 0; c < 4; ++c) {
      double exact = retained ? static_cast<double>(target) * static_cast<double>(retained_by_class[c].size()) /
                                    static_cast<double>(retained)
                              : 0.0;
      quota[c] = static_cast<std::size_t>(std::floor(exact));
      remainder[c] = exact - std::floor(exact);
      assigned += quota[c];
    }
    std::array<int, 4> order{0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int i = 0; assigned < target && i < 4; ++i) {
      if (quota[order[i]] < retained_by_class[order[i]].size()) {
        ++quota[order[i]];
        ++assigned;
      }
    }
    Rng vrng(mix_seed(mix_seed(seed, k), static_cast<std::uint64_t>(regime) + 0x76616cull));
    for (int c = 0; c < 4; ++c) {
      auto pool = retained_by_class[c];
      vrng.shuffle(pool);
      for (std::size_t i = 0; i < quota[c] && i < pool.size(); ++i) plan.assignment[pool[i]->trial_id] = Portion::Val;
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<SplitPlan> make_dataset_folds(const std::vector<BatchSpec>& batches, Regime regime, int n_folds,
                                          std::uint64_t seed) {
  std::vector<SplitPlan> merged(static_cast<std::size_t>(n_folds));
  for (int k = 0; k < n_folds; ++k) {
    merged[k].fold_id = k;
    merged[k].regime_filter = regime;
  }
  for (std::size_t b = 0; b < batches.size(); ++b) {
    auto plans = make_folds(batches[b], regime, n_folds, mix_seed(seed, b));
    for (int k = 0; k < n_folds; ++k) merged[k].assignment.insert(plans[k].assignment.begin(), plans[k].assignment.end());
  }
  return merged;
}

bool SplitReport::ok() const { return count(Severity::Fatal) == 0; }

std::size_t SplitReport::count(Severity s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [s](const SplitReportEntry& e) { return e.severity == s; }));
}

SplitReport verify_split(const SplitPlan& plan, const BatchSpec& batch) {
  SplitReport rep;
  auto add = [&](Severity s, std::string check, std::string msg) {
    rep.entries.push_back({s, std::move(check), std::move(msg)});
  };

  std::vector<const BatchTrial*> scoped;
  for (const auto& t : batch.trials) {
    if (t.regime == plan.regime_filter) scoped.push_back(&t);
  }
  std::set<std::string> held_p, held_a;
  std::size_t missing = 0;
  for (const auto* t : scoped) {
    auto it = plan.assignment.find(t->trial_id);
    if (it == plan.assignment.end()) {
      ++missing;
      continue;
    }
    if (it->second == Portion::TestNewParticipant || it->second == Portion::TestBoth) held_p.insert(t->participant_id);
    if (it->second == Portion::TestNewItem || it->second == Portion::TestBoth) held_a.insert(t->article_id);
  }
  if (missing) add(Severity::Fatal, "partition", std::to_string(missing) + " in-scope trials unassigned");

  std::array<std::size_t, 5> counts{};
  for (const auto* t : scoped) {
    auto it = plan.assignment.find(t->trial_id);
    if (it == plan.assignment.end()) continue;
    const Portion p = it->second;
    ++counts[static_cast<int>(p)];
    rep.answer_histogram[p][static_cast<int>(t->starc)]++;
    const bool hp = held_p.count(t->participant_id) > 0;
    const bool ha = held_a.count(t->article_id) > 0;
    bool ok = true;
    switch (p) {
      case Portion::Train:
      case Portion::Val:
        if (ha) add(Severity::Fatal, "article-atomicity", t->trial_id + " (" + to_string(p) + ") uses held-out article " + t->article_id);
        if (hp) add(Severity::Fatal, "regime-cell", t->trial_id + " (" + to_string(p) + ") uses held-out participant " + t->participant_id);
        continue;
      case Portion::TestNewParticipant: ok = hp && !ha; break;
      case Portion::TestNewItem: ok = ha && !hp; break;
      case Portion::TestBoth: ok = ha && hp; break;
    }
    if (!ok) add(Severity::Fatal, "regime-cell", t->trial_id + " is in the wrong test regime (" + to_string(p) + ")");
  }

  const double total = static_cast<double>(scoped.size());
  const std::array<std::pair<Portion, double>, 5> nominal = {{{Portion::Train, 0.64},
                                                             {Portion::Val, 0.17},
                                                             {Portion::TestNewParticipant, 0.09},
                                                             {Portion::TestNewItem, 0.09},
                                                             {Portion::TestBoth, 0.01}}};
  for (auto [p, expect] : nominal) {
    double frac = total > 0 ? static_cast<double>(counts[static_cast<int>(p)]) / total : 0.0;
    rep.proportions[p] = frac;
    if (std::abs(frac - expect) > 0.02) {
      add(Severity::Warning, "proportions",
          to_string(p) + " holds " + format_double(100 * frac) + "% (nominal " + format_double(100 * expect) + "%)");
    }
  }

  auto share = [&](Portion p, int c) {
    const auto& h = rep.answer_histogram[p];
    double n = static_cast<double>(h[0] + h[1] + h[2] + h[3]);
    return n > 0 ? static_cast<double>(h[c]) / n : 0.0;
  };
  if (counts[0] > 0 && counts[1] > 0) {
    for (int c = 0; c < 4; ++c) {
      double d = std::abs(share(Portion::Train, c) - share(Portion::Val, c));
      if (d > 0.10) {
        add(Severity::Warning, "answer-balance",
            std::string("answer type ") + to_char(static_cast<Starc>(c)) + " differs by " + format_double(100 * d) +
                " points between train and val");
      }
    }
  }
  return rep;
}

void write_split_plans(std::ostream& out, const std::vector<SplitPlan>& plans) {
  write_delimited(out, {"fold_id", "trial_id", "portion"}, ',');
  for (const auto& p : plans) {
    for (const auto& [id, portion] : p.assignment) {
      write_delimited(out, {std::to_string(p.fold_id), id, to_string(portion)}, ',');
    }
  }
}

std::vector<SplitPlan> read_split_plans(std::istream& in, const std::string& source, Regime regime) {
  Table t = Table::read(in, ',', source);
  std::map<int, SplitPlan> by_fold;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    int fold = static_cast<int>(parse_int(t.at(r, "fold_id"), "fold_id", t.line_of(r)));
    auto& plan = by_fold[fold];
    plan.fold_id = fold;
    plan.regime_filter = regime;
    if (!plan.assignment.emplace(t.at(r, "trial_id"), parse_portion(t.at(r, "portion"))).second) {
      throw ParseError(source + ": row " + std::to_string(t.line_of(r)) + ": trial assigned twice in fold " +
                           std::to_string(fold),
                       t.line_of(r));
    }
  }
  std::vector<SplitPlan> out;
  for (auto& [k, p] : by_fold) out.push_back(std::move(p));
  return out;
}

}  // namespace qeye
