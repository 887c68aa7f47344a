#include <catch_amalgamated.hpp>

#include <sstream>

#include "fixtures.hpp"
#include "qeye/corpus.hpp"

using namespace qeye;
using qeye::testing::make_paragraph;

namespace {

const char* kHeader =
    "trial_id,participant_id,article_id,paragraph_id,question_id,regime,a1,a2,a3,a4,starc1,starc2,starc3,starc4,"
    "chosen_position\n";

std::vector<Trial> manifest(const std::string& rows) {
  std::istringstream in(std::string(kHeader) + rows);
  return read_manifest(in, "manifest.csv");
}

}  // namespace

TEST_CASE("manifest row choosing A is correct") {
  const auto t = manifest("t1,s1,art1,art1_p1,q1,gathering,w,x,y,z,A,B,C,D,1\n");
  REQUIRE(t.size() == 1);
  CHECK(t[0].starc_label == Starc::A);
  CHECK(t[0].binary_label == 1);
  CHECK(t[0].regime == Regime::Gathering);
  CHECK(t[0].choice_label() == 0);
}

TEST_CASE("manifest row choosing the D position is incorrect") {
  const auto t = manifest("t1,s1,art1,art1_p1,q1,hunting,w,x,y,z,B,D,A,C,2\n");
  CHECK(t[0].starc_label == Starc::D);
  CHECK(t[0].binary_label == 0);
  CHECK(t[0].regime == Regime::Hunting);
}

TEST_CASE("manifest rejects duplicate trial ids") {
  CHECK_THROWS_AS(manifest("t1,s1,art1,art1_p1,q1,gathering,w,x,y,z,A,B,C,D,1\n"
                           "t1,s2,art1,art1_p1,q1,gathering,w,x,y,z,A,B,C,D,1\n"),
                  ValidationError);
}

TEST_CASE("manifest rejects a non-bijective answer map") {
  CHECK_THROWS_AS(manifest("t1,s1,art1,art1_p1,q1,gathering,w,x,y,z,A,A,C,D,1\n"), ValidationError);
}

TEST_CASE("malformed manifest row names its line") {
  try {
    manifest("t1,s1,art1,art1_p1,q1,gathering,w,x,y,z,A,B,C,D,1\n"
             "t2,s1,art1,art1_p1,q1,reading,w,x,y,z,A,B,C,D,1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("row 3"));
  }
}

TEST_CASE("manifest round-trips") {
  auto trials = manifest("t1,s1,art1,art1_p1,q1,gathering,\"w, v\",x,y,z,C,A,D,B,3\n"
                         "t2,s2,art2,art2_p1,q2,hunting,a,b,c,d,A,B,C,D,4\n");
  trials[0].question.text = "quo dra wex";
  std::ostringstream out;
  write_manifest(out, trials);
  std::istringstream in(out.str());
  const auto again = read_manifest(in, "again");
  REQUIRE(again.size() == trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    CHECK(again[i].trial_id == trials[i].trial_id);
    CHECK(again[i].question.answers == trials[i].question.answers);
    CHECK(again[i].question.starc_of_position == trials[i].question.starc_of_position);
    CHECK(again[i].question.text == trials[i].question.text);
    CHECK(again[i].chosen_position == trials[i].chosen_position);
    CHECK(again[i].starc_label == trials[i].starc_label);
    CHECK(again[i].regime == trials[i].regime);
  }
}

TEST_CASE("fixation report groups and orders fixations") {
  std::istringstream in(
      "TRIAL_ID\tCURRENT_FIX_INDEX\tCURRENT_FIX_X\tCURRENT_FIX_Y\tCURRENT_FIX_DURATION\tCURRENT_FIX_PUPIL\t"
      "NEXT_SAC_DURATION\n"
      "t1\t1\t10\t20\t200\t900\t25\n"
      "t1\t2\t30\t20\t150\t910\t30\n"
      "t1\t3\t50\t20\t100\t905\t.\n");
  const auto sp = read_fixation_report(in, "fix.tsv");
  REQUIRE(sp.at("t1").fixations.size() == 3);
  const auto& f = sp.at("t1").fixations;
  CHECK(f[0].order_index == 0);
  CHECK(f[2].order_index == 2);
  CHECK(f[1].duration == 150);
  CHECK(f[0].passthrough.at("NEXT_SAC_DURATION") == "25");
  CHECK(f[2].passthrough.at("NEXT_SAC_DURATION") == ".");
  // Fixations plus reported saccades.
  CHECK(sp.at("t1").trial_dwell_time == 505);
}

TEST_CASE("fixation report rejects zero durations") {
  std::istringstream in(
      "TRIAL_ID\tCURRENT_FIX_INDEX\tCURRENT_FIX_X\tCURRENT_FIX_Y\tCURRENT_FIX_DURATION\tCURRENT_FIX_PUPIL\n"
      "t1\t1\t10\t20\t0\t900\n");
  CHECK_THROWS_AS(read_fixation_report(in, "fix.tsv"), ValidationError);
}

TEST_CASE("fixation report rejects missing required columns") {
  std::istringstream in("TRIAL_ID\tCURRENT_FIX_INDEX\tCURRENT_FIX_X\tCURRENT_FIX_Y\tCURRENT_FIX_DURATION\n"
                        "t1\t1\t10\t20\t100\n");
  CHECK_THROWS_WITH(read_fixation_report(in, "fix.tsv"), Catch::Matchers::ContainsSubstring("CURRENT_FIX_PUPIL"));
}

TEST_CASE("fixation report rejects non-monotone indices") {
  std::istringstream in(
      "TRIAL_ID\tCURRENT_FIX_INDEX\tCURRENT_FIX_X\tCURRENT_FIX_Y\tCURRENT_FIX_DURATION\tCURRENT_FIX_PUPIL\n"
      "t1\t2\t10\t20\t100\t900\n"
      "t1\t1\t10\t20\t100\t900\n");
  CHECK_THROWS_WITH(read_fixation_report(in, "fix.tsv"), Catch::Matchers::ContainsSubstring("ordering"));
}

TEST_CASE("fixation at a box centroid is assigned to that word") {
  const auto p = make_paragraph(12);
  const auto sp = qeye::testing::make_scanpath(*p, {{5, 100}});
  Scanpath raw = sp;
  raw.fixations[0].word_index.reset();
  CHECK(assign_fixations_to_words(raw, *p).fixations[0].word_index == 5);
}

TEST_CASE("fixation between lines is unassigned") {
  const auto p = make_paragraph(12, 6);
  auto para = *p;
  // Leave a gap between the two lines.
  for (auto& w : para.words) w.box_bottom -= 5;
  Scanpath sp;
  Fixation f;
  f.x = 0.5 * (para.words[0].box_left + para.words[0].box_right);
  f.y = para.words[0].box_bottom + 2;
  f.duration = 100;
  sp.fixations.push_back(f);
  CHECK_FALSE(assign_fixations_to_words(sp, para).fixations[0].word_index.has_value());
}

TEST_CASE("fixation on a shared box edge goes to the right-hand word") {
  const auto p = make_paragraph(4, 4);
  Scanpath sp;
  Fixation f;
  f.x = p->words[1].box_right;  // == words[2].box_left
  f.y = p->words[1].box_top + 1;
  f.duration = 100;
  sp.fixations.push_back(f);
  const auto a = assign_fixations_to_words(sp, *p);
  CHECK(a.fixations[0].word_index == 2);
  // Deterministic and idempotent.
  CHECK(assign_fixations_to_words(a, *p).fixations[0].word_index == 2);
}

TEST_CASE("assignment preserves count, order, durations and coordinates") {
  const auto p = make_paragraph(12);
  qeye::Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    Scanpath sp = qeye::testing::random_scanpath(*p, 20, rng);
    for (auto& f : sp.fixations) {
      f.x += rng.uniform(-30, 30);
      f.word_index.reset();
    }
    const auto a = assign_fixations_to_words(sp, *p);
    REQUIRE(a.fixations.size() == sp.fixations.size());
    for (std::size_t i = 0; i < sp.fixations.size(); ++i) {
      CHECK(a.fixations[i].x == sp.fixations[i].x);
      CHECK(a.fixations[i].y == sp.fixations[i].y);
      CHECK(a.fixations[i].duration == sp.fixations[i].duration);
      CHECK(a.fixations[i].order_index == sp.fixations[i].order_index);
    }
  }
}

TEST_CASE("paragraph geometry round-trips and validates") {
  const auto p = make_paragraph(9, 4);
  std::ostringstream out;
  write_paragraphs(out, {p.get()});
  std::istringstream in(out.str());
  const auto loaded = read_paragraphs(in, "paragraphs.csv");
  const auto& q = *loaded.at("art1_p1");
  REQUIRE(q.size() == 9);
  CHECK(q.article_id == "art1");
  CHECK(q.words[7].box_left == p->words[7].box_left);
  CHECK(q.words[7].line_index == 1);
  CHECK(q.full_text == p->full_text);
}

TEST_CASE("paragraph with a gap in word indices is rejected") {
  std::istringstream in("paragraph_id,word_index,surface,line_index,left,top,right,bottom\n"
                        "p,0,a,0,0,0,10,10\n"
                        "p,2,b,0,10,0,20,10\n");
  CHECK_THROWS_AS(read_paragraphs(in, "paragraphs.csv"), ValidationError);
}
