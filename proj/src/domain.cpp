#include "rematch/domain.hpp"

#include <algorithm>
#include <cmath>

namespace rematch {

namespace {
const std::array<std::string, kPositions> kPositionNames = {"Top", "Jungle", "Mid", "Bottom",
                                                            "Support"};
const std::array<std::string, 2> kTeamNames = {"blue", "red"};
}  // namespace

const std::string& position_name(Position p) { return kPositionNames[static_cast<int>(p)]; }

Position position_from_name(const std::string& name) {
  for (int i = 0; i < kPositions; ++i) {
    if (kPositionNames[i] == name) return static_cast<Position>(i);
  }
  throw DomainError("unknown position name: " + name);
}

const std::string& team_name(Team t) { return kTeamNames[static_cast<int>(t)]; }

Team team_from_name(const std::string& name) {
  if (name == kTeamNames[0]) return Team::Blue;
  if (name == kTeamNames[1]) return Team::Red;
  throw DomainError("unknown team name: " + name);
}

bool SatisfactionProfile::is_preselected(Position p) const {
  return std::find(preselected.begin(), preselected.end(), p) != preselected.end();
}

void SatisfactionProfile::validate() const {
  if (preselected.empty()) throw DomainError("satisfaction profile has no preselected position");
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw DomainError("satisfaction score outside [0,1]");
  }
  for (Position p : preselected) {
    if (score(p) != 1.0) throw DomainError("preselected position must score exactly 1.0");
  }
}

double fairness_score(double win_rate) {
  if (!(win_rate >= 0.0 && win_rate <= 1.0)) {
    throw DomainError("win rate outside [0,1]");
  }
  return 1.0 - 2.0 * std::abs(win_rate - 0.5);
}

double economy_alpha(double te_blue, double te_red) {
  if (!(te_blue >= 0.0) || !(te_red >= 0.0)) throw DomainError("team economy must be >= 0");
  double denom = std::max(te_blue, te_red);
  if (denom <= 0.0) throw DomainError("both team economies are zero");
  return (te_blue - te_red) / denom;
}

}  // namespace rematch
