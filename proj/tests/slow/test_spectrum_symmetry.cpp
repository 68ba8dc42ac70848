#include <doctest.h>

#include <cmath>
#include <map>
#include <utility>

#include "cavqed/experiments.hpp"
#include "cavqed/setups.hpp"
#include "cavqed/units.hpp"

using namespace cavqed;

namespace {

struct LineHeight {
  RamanLine line;
  double height = 0.0;  // peak rate above the dark floor
};

// Peak height of every beam A line from a short scan around its predicted position.
std::vector<LineHeight> line_heights(double repump854_detuning) {
  SystemModel m = reference_model(beam_a(mhz(88), -mhz(400)));
  m.lasers[1].detuning = repump854_detuning;
  std::vector<LineHeight> out;
  for (const auto& line : predicted_lines(m, 0)) {
    std::vector<double> grid;
    for (int i = 0; i < 16; ++i) grid.push_back(line.resonance + mhz(-0.75 + 1.5 * i / 15));
    const ScanResult r = raman_spectrum(m, grid, DetectionChain{});
    double best = 0.0;
    for (const auto& p : r.points) best = std::max(best, p.total() - r.dark_total());
    out.push_back({line, best});
  }
  return out;
}

std::pair<double, double> left_right(const std::vector<LineHeight>& heights) {
  double left = 0.0, right = 0.0;
  for (const auto& h : heights) (h.line.resonance < -mhz(400) ? left : right) += h.height;
  return {left, right};
}

}  // namespace

// Mirror lines (m_i, m_f) <-> (-m_i, -m_f) have equal alpha.beta. With symmetric repumps the
// heights still differ: the two S1/2 populations are not equal under the Zeeman-split drive.
TEST_CASE("symmetric repumps give mirror peaks within 3%" * doctest::may_fail()) {
  const auto heights = line_heights(0.0);
  REQUIRE(heights.size() == 10);
  for (const auto& a : heights)
    for (const auto& b : heights) {
      if (a.line.initial.two_m != -b.line.initial.two_m || a.line.final.two_m != -b.line.final.two_m) continue;
      if (a.line.initial.two_m > 0) continue;
      INFO(to_string(a.line.initial) << " -> " << to_string(a.line.final) << ": " << a.height << " vs " << b.height);
      CHECK(std::abs(a.height - b.height) <= 0.03 * 0.5 * (a.height + b.height));
    }
  const auto [left, right] = left_right(heights);
  INFO("left " << left << ", right " << right);
  CHECK(std::abs(left - right) <= 0.03 * 0.5 * (left + right));
}

TEST_CASE("854 nm repump detuning sets the asymmetry direction") {
  const auto [l_blue, r_blue] = left_right(line_heights(mhz(8)));
  const auto [l_red, r_red] = left_right(line_heights(-mhz(8)));
  INFO("+8 MHz: left " << l_blue << ", right " << r_blue << "; -8 MHz: left " << l_red << ", right " << r_red);
  CHECK(r_blue > 1.05 * l_blue);
  CHECK(l_red > 1.05 * r_red);
}
