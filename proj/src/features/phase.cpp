#include "mstyle/features/phase.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mstyle::features {

using motion::ContactLabels;
using motion::Gait;

double wrap_phase(double p) {
  double r = p - std::floor(p);
  return r >= 1.0 ? 0.0 : r;
}

double phase_delta(double a, double b) {
  double d = wrap_phase(b - a);
  return d >= 0.5 ? d - 1.0 : d;
}

namespace {

struct Event {
  std::size_t frame;
  double value;
};

bool onset(const std::vector<ContactLabels>& c, std::size_t t, std::size_t which) {
  return c[t][which] && (t == 0 || !c[t - 1][which]);
}

}  // namespace

std::vector<double> compute_phase(const std::vector<ContactLabels>& contacts, const std::vector<Gait>& actions) {
  if (contacts.size() != actions.size()) {
    throw std::invalid_argument("contact and action label counts differ");
  }
  const std::size_t n = contacts.size();
  std::vector<double> unwrapped(n, 0.0);
  std::vector<bool> walk(n);
  for (std::size_t t = 0; t < n; ++t) {
    walk[t] = actions[t] != Gait::stand;
  }

  // Walk segments and their strike events with unwrapped values.
  struct Segment {
    std::size_t begin;
    std::size_t end;  // inclusive
    std::vector<Event> events;
  };
  std::vector<Segment> segments;
  std::vector<double> rates;
  for (std::size_t t = 0; t < n;) {
    if (!walk[t]) {
      ++t;
      continue;
    }
    Segment seg{t, t, {}};
    while (seg.end + 1 < n && walk[seg.end + 1]) {
      ++seg.end;
    }
    for (std::size_t f = seg.begin; f <= seg.end; ++f) {
      double value = -1.0;
      if (onset(contacts, f, motion::kLeftHeel)) {
        value = 0.0;
      } else if (onset(contacts, f, motion::kRightHeel)) {
        value = 0.5;
      }
      if (value < 0.0) {
        continue;
      }
      if (!seg.events.empty()) {
        const Event& last = seg.events.back();
        double step = wrap_phase(value - wrap_phase(last.value));
        if (step == 0.0) {
          step = 1.0;
        }
        value = last.value + step;
        rates.push_back(step / static_cast<double>(f - last.frame));
      }
      seg.events.push_back({f, value});
    }
    if (seg.events.empty()) {
      throw LabelingError("no heel-strike contact events in walk segment frames " + std::to_string(seg.begin) + "-" +
                          std::to_string(seg.end));
    }
    t = seg.end + 1;
    segments.push_back(std::move(seg));
  }

  double fallback_rate = 0.0;
  if (!rates.empty()) {
    std::vector<double> sorted = rates;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    fallback_rate = sorted[sorted.size() / 2];
  }

  for (const Segment& seg : segments) {
    const auto& ev = seg.events;
    const double first_rate = ev.size() > 1
                                  ? (ev[1].value - ev[0].value) / static_cast<double>(ev[1].frame - ev[0].frame)
                                  : fallback_rate;
    const double last_rate =
        ev.size() > 1 ? (ev.back().value - ev[ev.size() - 2].value) /
                            static_cast<double>(ev.back().frame - ev[ev.size() - 2].frame)
                      : fallback_rate;
    for (std::size_t f = seg.begin; f < ev.front().frame; ++f) {
      unwrapped[f] = ev.front().value - first_rate * static_cast<double>(ev.front().frame - f);
    }
    for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
      const double span = static_cast<double>(ev[i + 1].frame - ev[i].frame);
      for (std::size_t f = ev[i].frame; f < ev[i + 1].frame; ++f) {
        const double a = static_cast<double>(f - ev[i].frame) / span;
        unwrapped[f] = ev[i].value + a * (ev[i + 1].value - ev[i].value);
      }
    }
    for (std::size_t f = ev.back().frame; f <= seg.end; ++f) {
      unwrapped[f] = ev.back().value + last_rate * static_cast<double>(f - ev.back().frame);
    }
  }

  std::vector<double> phase(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    phase[t] = wrap_phase(unwrapped[t]);
  }
  // Stand frames hold; leading stand copies the first walk value.
  const auto first_walk = std::find(walk.begin(), walk.end(), true);
  const double lead = first_walk == walk.end() ? 0.0 : phase[static_cast<std::size_t>(first_walk - walk.begin())];
  for (std::size_t t = 0; t < n; ++t) {
    if (!walk[t]) {
      phase[t] = t == 0 ? lead : phase[t - 1];
    }
  }
  return phase;
}

}  // namespace mstyle::features
