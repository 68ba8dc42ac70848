#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <random>

#include "cavqed/experiments.hpp"
#include "cavqed/localization.hpp"
#include "cavqed/raman.hpp"
#include "cavqed/setups.hpp"
#include "cavqed/units.hpp"
#include "config.hpp"
#include "output.hpp"

namespace cavqed {
std::string_view bundled_config_fig3a();
std::string_view bundled_config_fig3b();
std::string_view bundled_config_fig4();
std::string_view bundled_config_fig5();
std::string_view bundled_config_fig6a();
std::string_view bundled_config_fig6b();
std::string_view bundled_config_fig8();
std::string_view bundled_config_fig9();
std::string_view bundled_config_fig10();
}  // namespace cavqed

namespace cavqed::cli {

using nlohmann::json;

namespace {

const json& block(const json& config, const char* key) {
  static const json empty = json::object();
  return config.contains(key) ? config[key] : empty;
}

std::string state_label(const ZeemanState& s) {
  std::string m = (s.two_m < 0 ? "-" : "+") + std::to_string(std::abs(s.two_m)) + "/2";
  return std::string(label(s.manifold)).substr(0, 1) + m;
}

std::string line_label(const RamanLine& l) { return state_label(l.initial) + ">" + state_label(l.final); }

const char* channel_name(int c) { return c == 0 ? "H" : "V"; }

struct Outputs {
  std::vector<std::pair<std::string, CsvTable>> tables;  // suffix, table; the first has no suffix
  json results = json::object();
  std::vector<Panel> panels;
  std::string text;  // printed to the terminal after the summary
};

void emit(const RunContext& ctx, const std::string& command, const std::string& mode, const Outputs& out) {
  std::filesystem::create_directories(ctx.out_dir);
  const std::filesystem::path dir(ctx.out_dir);
  json files = json::array();
  for (const auto& [suffix, table] : out.tables) {
    const std::string name = ctx.base_name + (suffix.empty() ? "" : "_" + suffix) + ".csv";
    write_text((dir / name).string(), table.render(ctx.hash));
    files.push_back(name);
  }
  if (ctx.plot && !out.panels.empty()) {
    const std::string name = ctx.base_name + ".svg";
    write_text((dir / name).string(), render_svg(out.panels, ctx.hash));
    files.push_back(name);
  }
  json meta;
  meta["command"] = command;
  if (!mode.empty()) meta["mode"] = mode;
  meta["config_hash"] = ctx.hash;
  meta["seed"] = ctx.seed;
  const EvolveOptions ev = evolve_from(ctx.config);
  meta["solver"] = {{"n_max", n_max_from(ctx.config)}, {"rtol", ev.rtol}, {"atol", ev.atol}, {"max_steps", ev.max_steps},
                    {"steady_state_residual_tolerance", SteadyStateOptions{}.residual_tolerance}};
  meta["files"] = files;
  meta["results"] = out.results;
  if (ctx.timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    meta["timestamp"] = buf;
  }
  write_text((dir / (ctx.base_name + ".json")).string(), meta.dump(2) + "\n");
}

RamanSetting setting_of(const SystemModel& m, int drive) {
  RamanSetting s;
  s.field = m.field;
  s.drive = m.lasers[drive];
  s.cavity_detuning = m.cavity_detuning;
  s.cavity = m.modes;
  return s;
}

// The pulsed experiments run with the repumps off: the ion must stay in D5/2 once it has emitted.
SystemModel drive_only(const SystemModel& m, int drive) {
  SystemModel out = m;
  out.lasers = {m.lasers[drive]};
  return out;
}

// Single-tone model tuned to the Raman resonance of one transition.
SystemModel transition_model(const SystemModel& base, int drive, const json& t) {
  SystemModel m = drive_only(base, drive);
  if (t.contains("rabi_mhz")) m.lasers[0].rabi = mhz(t["rabi_mhz"].get<double>());
  const ZeemanState initial = make_state(Manifold::S12, t["initial_m"].get<double>());
  const ZeemanState final = make_state(Manifold::D52, t["final_m"].get<double>());
  for (const auto& l : predicted_lines(m, 0))
    if (l.initial == initial && l.final == final) {
      m.lasers[0].detuning = l.resonance + mhz(get_or(t, "detuning_offset_mhz", 0.0));
      return m;
    }
  throw ConfigError("pulse: the drive has no Raman line " + to_string(initial) + " -> " + to_string(final));
}

std::string transition_label(const json& t) {
  if (t.contains("label")) return t["label"].get<std::string>();
  char buf[48];
  std::snprintf(buf, sizeof buf, "S%+g>D%+g", t["initial_m"].get<double>(), t["final_m"].get<double>());
  return buf;
}

json shape_json(const PulseShape& s) {
  return {{"efficiency_h", s.efficiency[0]},
          {"efficiency_v", s.efficiency[1]},
          {"total_efficiency", s.total_efficiency()},
          {"designated_channel", channel_name(s.designated_channel)},
          {"leakage", s.leakage()}};
}

PulseOptions pulse_options(const RunContext& ctx, const json& b) {
  PulseOptions o;
  o.duration = us(get_or(b, "duration_us", 80.0));
  o.bin_width = get_or(b, "bin_width_ns", 200.0) * 1e-9;
  o.n_max = n_max_from(ctx.config);
  o.designated_channel = get_or(b, "designated_channel", -1);
  o.evolve = evolve_from(ctx.config);
  return o;
}

// ------------------------------------------------------------------ plan

std::string aligned(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out += cells[i];
      if (i + 1 == cells.size()) out += '\n';
      else out += std::string(width[i] - cells[i].size() + 2, ' ');
    }
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string cmd_plan(RunContext& ctx, Outputs& out) {
  const SystemModel m = model_from(ctx.config, atom_from(ctx.config, ctx.config_dir));
  const int d = drive_index(m, json());
  const RamanSetting s = setting_of(m, d);
  const auto paths = enumerate_paths(s);
  const auto lines = merge_lines(paths, s);
  const auto pairs = select_optimal_pair(s);

  CsvTable lt({"initial", "final", "relative_detuning_mhz", "strength_h", "strength_v", "channel"});
  json jl = json::array();
  Panel panel{"Raman lines", "drive detuning - cavity detuning (MHz)", "alpha.beta", {}, {}};
  Series sh{"H", {}, {}, true}, sv{"V", {}, {}, true};
  for (const auto& l : lines) {
    const double rel = to_mhz(l.resonance - m.cavity_detuning);
    lt.add_row(std::vector<std::string>{state_label(l.initial), state_label(l.final), format_number(rel),
                                        format_number(l.strength(0)), format_number(l.strength(1)),
                                        channel_name(l.dominant_channel())});
    jl.push_back({{"line", line_label(l)}, {"relative_detuning_mhz", rel}, {"strength_h", l.strength(0)},
                  {"strength_v", l.strength(1)}});
    if (l.strength(0) > 0) sh.x.push_back(rel), sh.y.push_back(l.strength(0));
    if (l.strength(1) > 0) sv.x.push_back(rel), sv.y.push_back(l.strength(1));
  }
  panel.series = {sh, sv};

  CsvTable pt({"rank", "initial", "first_final", "first_channel", "first_strength", "second_final", "second_channel",
               "second_strength"});
  json jp = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const double a = p.first.strength(p.first_channel), b = p.second.strength(p.second_channel);
    pt.add_row(std::vector<std::string>{std::to_string(i + 1), state_label(p.first.initial), state_label(p.first.final),
                                        channel_name(p.first_channel), format_number(a), state_label(p.second.final),
                                        channel_name(p.second_channel), format_number(b)});
    jp.push_back({{"first", line_label(p.first)}, {"first_channel", channel_name(p.first_channel)}, {"first_strength", a},
                  {"second", line_label(p.second)}, {"second_channel", channel_name(p.second_channel)},
                  {"second_strength", b}});
  }
  CsvTable path_table({"initial", "intermediate", "final", "channel", "alpha", "beta", "alpha_beta",
                       "relative_detuning_mhz"});
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : paths) {
    rows.push_back({state_label(p.initial), state_label(p.intermediate), state_label(p.final), channel_name(p.channel),
                    format_number(std::abs(p.alpha)), format_number(std::abs(p.beta)), format_number(p.strength()),
                    format_number(to_mhz(resonance_detuning(p, s) - m.cavity_detuning))});
    path_table.add_row(rows.back());
  }
  out.text = aligned({"initial", "via", "final", "ch", "alpha", "beta", "alpha.beta", "detuning_mhz"}, rows);

  out.tables.emplace_back("", path_table);
  out.tables.emplace_back("lines", lt);
  out.tables.emplace_back("pairs", pt);
  out.results = {{"paths", paths.size()},
                 {"lines", jl},
                 {"distinct_resonances", count_distinct_resonances(lines)},
                 {"pairs", jp}};
  out.panels.push_back(panel);
  if (pairs.empty()) return "plan: " + std::to_string(lines.size()) + " lines, no orthogonal pair";
  char buf[160];
  std::snprintf(buf, sizeof buf, "plan: %zu lines; top pair %s (%s) %.3f / %s (%s) %.3f", lines.size(),
                line_label(pairs[0].first).c_str(), channel_name(pairs[0].first_channel),
                pairs[0].first.strength(pairs[0].first_channel), line_label(pairs[0].second).c_str(),
                channel_name(pairs[0].second_channel), pairs[0].second.strength(pairs[0].second_channel));
  return buf;
}

// ------------------------------------------------------------------ spectra

struct SpectrumRun {
  SystemModel model;
  ScanResult scan;
  double reference = 0.0;  // subtracted from the detunings in the outputs
};

SpectrumRun run_spectrum(RunContext& ctx) {
  SpectrumRun run;
  run.model = model_from(ctx.config, atom_from(ctx.config, ctx.config_dir));
  const json& b = ctx.config["spectrum"];
  SpectrumOptions o;
  o.drive = drive_index(run.model, b);
  o.n_max = n_max_from(ctx.config);
  o.jobs = ctx.jobs;
  o.dwell = get_or(b, "dwell_ms", 75.0) * 1e-3;
  o.peak_threshold = get_or(b, "peak_threshold", 3.0);
  run.reference = get_or(b, "relative_to_cavity", true) ? run.model.cavity_detuning : 0.0;
  std::vector<double> grid;
  for (double v : range_values(b["detuning_mhz"])) grid.push_back(run.reference + mhz(v));
  run.scan = raman_spectrum(run.model, grid, DetectionChain(detection_from(ctx.config)), o);
  return run;
}

json peaks_json(const ScanResult& r, double reference) {
  json out = json::array();
  for (const auto& p : r.peaks) {
    json labels = json::array();
    for (int l : p.lines) labels.push_back(line_label(r.lines[l]));
    json e = {{"detuning_mhz", to_mhz(p.detuning - reference)},
              {"height_hz", p.height},
              {"channel", channel_name(p.channel)},
              {"width_mhz", std::isfinite(p.width) ? json(to_mhz(p.width)) : json(nullptr)},
              {"lines", labels}};
    if (p.matched()) {
      e["predicted_mhz"] = to_mhz(p.predicted - reference);
      e["expected_channel"] = channel_name(p.expected_channel);
    }
    out.push_back(e);
  }
  return out;
}

CsvTable peaks_table(const ScanResult& r, double reference) {
  CsvTable t({"detuning_mhz", "height_hz", "channel", "width_mhz", "predicted_mhz", "expected_channel", "lines"});
  for (const auto& p : r.peaks) {
    std::string labels;
    for (int l : p.lines) labels += (labels.empty() ? "" : " ") + line_label(r.lines[l]);
    t.add_row(std::vector<std::string>{format_number(to_mhz(p.detuning - reference)), format_number(p.height),
                                       channel_name(p.channel), format_number(to_mhz(p.width)),
                                       p.matched() ? format_number(to_mhz(p.predicted - reference)) : "",
                                       p.matched() ? channel_name(p.expected_channel) : "", labels});
  }
  return t;
}

Panel spectrum_panel(const std::string& title, const ScanResult& r, double reference) {
  Panel panel{title, "drive detuning (MHz)", "count rate (1/s)", {}, {}};
  for (int c = 0; c < 2; ++c) {
    Series s{std::string("APD ") + channel_name(c), {}, {}, false};
    for (const auto& p : r.points) {
      s.x.push_back(to_mhz(p.detuning - reference));
      s.y.push_back(p.converged ? p.rate[c] : NAN);
    }
    panel.series.push_back(s);
  }
  for (const auto& l : r.lines) panel.markers_x.push_back(to_mhz(l.resonance - reference));
  return panel;
}

std::string cmd_spectrum(RunContext& ctx, Outputs& out) {
  const SpectrumRun run = run_spectrum(ctx);
  const ScanResult& r = run.scan;
  CsvTable t({"detuning_mhz", "rate_h_hz", "rate_v_hz", "counts_h", "counts_v", "population_s_minus",
              "population_s_plus", "converged", "residual"});
  double s_plus = 0.0;
  for (const auto& p : r.points) {
    t.add_row({to_mhz(p.detuning - run.reference), p.rate[0], p.rate[1], p.rate[0] * r.dwell, p.rate[1] * r.dwell,
               p.s_population[0], p.s_population[1], p.converged ? 1.0 : 0.0, p.residual});
    s_plus = std::max(s_plus, p.s_population[1]);
  }
  const double fraction = get_or(ctx.config["spectrum"], "dominant_fraction", 0.1);
  const auto dominant = r.dominant_peaks(fraction);
  out.tables.emplace_back("", t);
  out.tables.emplace_back("peaks", peaks_table(r, run.reference));
  out.results = {{"points", r.points.size()},
                 {"failed_points", r.failed_points()},
                 {"dwell_s", r.dwell},
                 {"dark_hz", r.dark},
                 {"peaks", peaks_json(r, run.reference)},
                 {"peak_count", r.peaks.size()},
                 {"dominant_fraction", fraction},
                 {"dominant_peak_count", dominant.size()},
                 {"max_population_s_plus", s_plus}};
  out.panels.push_back(spectrum_panel("Raman spectrum", r, run.reference));
  return "spectrum: " + std::to_string(r.peaks.size()) + " peaks, " + std::to_string(dominant.size()) +
         " dominant, " + std::to_string(r.failed_points()) + " failed points";
}

std::string cmd_sidebands(RunContext& ctx, Outputs& out) {
  const SpectrumRun run = run_spectrum(ctx);
  const json& b = ctx.config["sidebands"];
  TrapModel trap;
  for (const auto& m : b["modes"]) {
    if (!m.contains("frequency_mhz")) throw ConfigError("/sidebands/modes: frequency_mhz is required");
    trap.modes.push_back({m.contains("name") ? m["name"].get<std::string>() : "mode", mhz(m["frequency_mhz"].get<double>()),
                          m["eta"].get<double>(), m["nbar"].get<double>()});
  }
  trap.rf_frequency = mhz(get_or(b, "rf_frequency_mhz", 23.4));
  trap.micromotion_index = get_or(b, "micromotion_index", 0.0);
  const ScanResult total = sideband_overlay(run.scan, trap);

  CsvTable t({"detuning_mhz", "carrier_h_hz", "carrier_v_hz", "rate_h_hz", "rate_v_hz"});
  for (std::size_t i = 0; i < total.points.size(); ++i)
    t.add_row({to_mhz(total.points[i].detuning - run.reference), run.scan.points[i].rate[0], run.scan.points[i].rate[1],
               total.points[i].rate[0], total.points[i].rate[1]});
  json modes = json::array();
  for (const auto& m : trap.modes)
    modes.push_back({{"name", m.name}, {"frequency_mhz", to_mhz(m.frequency)}, {"eta", m.eta}, {"nbar", m.nbar},
                     {"red_weight", m.eta * m.eta * m.nbar}, {"blue_weight", m.eta * m.eta * (m.nbar + 1.0)}});
  out.tables.emplace_back("", t);
  out.tables.emplace_back("peaks", peaks_table(total, run.reference));
  out.results = {{"modes", modes},
                 {"rf_frequency_mhz", to_mhz(trap.rf_frequency)},
                 {"micromotion_index", trap.micromotion_index},
                 {"micromotion_weight", trap.micromotion_index * trap.micromotion_index},
                 {"carrier_peaks", peaks_json(run.scan, run.reference)},
                 {"peaks", peaks_json(total, run.reference)},
                 {"failed_points", run.scan.failed_points()}};
  out.panels.push_back(spectrum_panel("Spectrum with motional sidebands", total, run.reference));
  return "sidebands: " + std::to_string(run.scan.peaks.size()) + " carrier peaks, " +
         std::to_string(total.peaks.size()) + " with sidebands";
}

// ------------------------------------------------------------------ pulses

std::string cmd_pulse(RunContext& ctx, Outputs& out) {
  const SystemModel base = model_from(ctx.config, atom_from(ctx.config, ctx.config_dir));
  const json& b = ctx.config["pulse"];
  const int d = drive_index(base, b);
  const DetectionChain chain = detection_from(ctx.config);
  const PulseOptions o = pulse_options(ctx, b);

  std::vector<PulseShape> shapes;
  std::vector<std::string> labels;
  std::vector<std::string> columns{"time_us"};
  json results = json::array();
  for (const auto& t : b["transitions"]) {
    const SystemModel m = transition_model(base, d, t);
    shapes.push_back(photon_pulse(m, chain, make_state(Manifold::S12, t["initial_m"].get<double>()), o));
    labels.push_back(transition_label(t));
    columns.push_back(labels.back() + "_h");
    columns.push_back(labels.back() + "_v");
    json r = shape_json(shapes.back());
    r["transition"] = labels.back();
    r["rabi_mhz"] = to_mhz(m.lasers[0].rabi);
    r["drive_detuning_mhz"] = to_mhz(m.lasers[0].detuning);
    results.push_back(r);
  }
  CsvTable table(columns);
  for (std::size_t i = 0; i < shapes[0].bin_start.size(); ++i) {
    std::vector<double> row{shapes[0].bin_start[i] * 1e6};
    for (const auto& s : shapes) row.push_back(s.probability[0][i]), row.push_back(s.probability[1][i]);
    table.add_row(row);
  }
  Panel panel{"Single-photon pulse shapes", "time (us)", "detection probability per bin", {}, {}};
  for (std::size_t k = 0; k < shapes.size(); ++k)
    for (int c = 0; c < 2; ++c) {
      if (shapes[k].efficiency[c] <= 0.0) continue;
      Series s{labels[k] + " " + channel_name(c), {}, shapes[k].probability[c], false};
      for (double t0 : shapes[k].bin_start) s.x.push_back(t0 * 1e6);
      panel.series.push_back(s);
    }
  out.tables.emplace_back("", table);
  out.results = {{"bin_width_ns", o.bin_width * 1e9}, {"duration_us", o.duration * 1e6}, {"transitions", results}};
  if (shapes.size() >= 2) out.results["overlap_first_two"] = pulse_overlap(shapes[0], shapes[1]);
  out.panels.push_back(panel);
  std::string summary = "pulse:";
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    char buf[96];
    std::snprintf(buf, sizeof buf, " %s efficiency %.4f leakage %.4f;", labels[k].c_str(), shapes[k].total_efficiency(),
                  shapes[k].leakage());
    summary += buf;
  }
  return summary;
}

std::string cmd_overlap(RunContext& ctx, Outputs& out) {
  const SystemModel base = model_from(ctx.config, atom_from(ctx.config, ctx.config_dir));
  const json& b = ctx.config["overlap"];
  const int d = drive_index(base, b);
  const DetectionChain chain = detection_from(ctx.config);
  const PulseOptions o = pulse_options(ctx, block(ctx.config, "pulse"));
  const json& rt = b["reference"];
  const json& tt = b["tuned"];
  const PulseShape reference =
      photon_pulse(transition_model(base, d, rt), chain, make_state(Manifold::S12, rt["initial_m"].get<double>()), o);
  const SystemModel tuned = transition_model(base, d, tt);
  std::vector<double> rabi, offsets;
  for (const auto& v : b["rabi_mhz"]) rabi.push_back(mhz(v.get<double>()));
  for (const auto& v : b["detuning_offset_mhz"]) offsets.push_back(mhz(v.get<double>()));
  const OverlapScan scan =
      maximize_overlap(reference, tuned, chain, make_state(Manifold::S12, tt["initial_m"].get<double>()), rabi, offsets, o);

  CsvTable t({"rabi_mhz", "detuning_offset_mhz", "overlap"});
  Panel panel{"Pulse-shape overlap", "detuning offset (MHz)", "overlap", {}, {}};
  for (std::size_t i = 0; i < rabi.size(); ++i) {
    char name[48];
    std::snprintf(name, sizeof name, "%.4g MHz", to_mhz(rabi[i]));
    Series s{name, {}, {}, offsets.size() == 1};
    for (std::size_t j = 0; j < offsets.size(); ++j) {
      t.add_row({to_mhz(rabi[i]), to_mhz(offsets[j]), scan.overlap[i][j]});
      s.x.push_back(to_mhz(offsets[j]));
      s.y.push_back(scan.overlap[i][j]);
    }
    panel.series.push_back(s);
  }
  out.tables.emplace_back("", t);
  out.results = {{"reference", transition_label(rt)},
                 {"reference_shape", shape_json(reference)},
                 {"tuned", transition_label(tt)},
                 {"best_overlap", scan.best_overlap},
                 {"best_rabi_mhz", to_mhz(scan.best_rabi)},
                 {"best_detuning_offset_mhz", to_mhz(scan.best_detuning_offset)}};
  out.panels.push_back(panel);
  char buf[128];
  std::snprintf(buf, sizeof buf, "overlap: best %.4f at %.4g MHz, offset %.4g MHz", scan.best_overlap,
                to_mhz(scan.best_rabi), to_mhz(scan.best_detuning_offset));
  return buf;
}

// ------------------------------------------------------------------ entanglement

BichromaticOptions bichromatic_options(const RunContext& ctx, const json& b) {
  BichromaticOptions o;
  o.duration = us(get_or(b, "duration_us", o.duration * 1e6));
  if (b.contains("rabi_mhz")) o.rabi = mhz(b["rabi_mhz"].get<double>());
  o.mixing = get_or(b, "mixing_rad", o.mixing);
  o.relative_phase = get_or(b, "relative_phase_rad", 0.0);
  o.global_phase = get_or(b, "global_phase_rad", 0.0);
  o.overlap_warning = get_or(b, "overlap_warning", o.overlap_warning);
  o.discard_scattered = get_or(b, "discard_scattered", false);
  o.pulse.bin_width = get_or(b, "bin_width_ns", 200.0) * 1e-9;
  o.pulse.n_max = n_max_from(ctx.config);
  o.pulse.evolve = evolve_from(ctx.config);
  return o;
}

json report_json(const JointStateReport& r) {
  json rho = json::array();
  for (int i = 0; i < r.rho.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < r.rho.cols(); ++j) row.push_back({r.rho(i, j).real(), r.rho(i, j).imag()});
    rho.push_back(row);
  }
  return {{"basis", r.basis},
          {"rho", rho},
          {"fidelity", r.fidelity},
          {"phase_rad", r.phase},
          {"emission_probability", r.emission_probability},
          {"channel_probability_h", r.channel_probability[0]},
          {"channel_probability_v", r.channel_probability[1]},
          {"shape_overlap", r.shape_overlap}};
}

CsvTable density_table(const JointStateReport& r) {
  CsvTable t({"row", "column", "re", "im"});
  for (int i = 0; i < r.rho.rows(); ++i)
    for (int j = 0; j < r.rho.cols(); ++j)
      t.add_row(std::vector<std::string>{r.basis[i], r.basis[j], format_number(r.rho(i, j).real()),
                                         format_number(r.rho(i, j).imag())});
  return t;
}

std::string cmd_entangle(RunContext& ctx, Outputs& out) {
  const SystemModel base = model_from(ctx.config, atom_from(ctx.config, ctx.config_dir));
  const json& b = ctx.config["entangle"];
  const SystemModel m = drive_only(base, drive_index(base, b));
  const DetectionChain chain = detection_from(ctx.config);
  const BichromaticOptions o = bichromatic_options(ctx, b);
  const JointStateReport r = entangle_bichromatic(m, chain, o);

  CsvTable shape({"time_us", "h", "v"});
  Panel panel{"Emission-conditioned photon shape", "time (us)", "detection probability per bin", {}, {}};
  Series sh{"H", {}, r.shape.probability[0], false}, sv{"V", {}, r.shape.probability[1], false};
  for (std::size_t i = 0; i < r.shape.bin_start.size(); ++i) {
    shape.add_row({r.shape.bin_start[i] * 1e6, r.shape.probability[0][i], r.shape.probability[1][i]});
    sh.x.push_back(r.shape.bin_start[i] * 1e6);
    sv.x.push_back(r.shape.bin_start[i] * 1e6);
  }
  panel.series = {sh, sv};
  out.tables.emplace_back("", density_table(r));
  out.tables.emplace_back("shape", shape);
  out.results = report_json(r);

  if (b.contains("phase_scan_rad")) {
    CsvTable scan({"relative_phase_rad", "coherence_phase_rad", "fidelity", "fidelity_at_zero_phase"});
    json js = json::array();
    Panel pp{"Coherence phase vs tone phase", "relative tone phase (rad)", "coherence phase (rad)", {}, {}};
    Series s{"phase", {}, {}, true};
    for (const auto& v : b["phase_scan_rad"]) {
      BichromaticOptions ov = o;
      ov.relative_phase = v.get<double>();
      const JointStateReport rv = entangle_bichromatic(m, chain, ov);
      scan.add_row({ov.relative_phase, rv.phase, rv.fidelity, rv.fidelity_at(0.0)});
      js.push_back({{"relative_phase_rad", ov.relative_phase}, {"phase_rad", rv.phase}, {"fidelity", rv.fidelity}});
      s.x.push_back(ov.relative_phase);
      s.y.push_back(rv.phase);
    }
    pp.series.push_back(s);
    out.tables.emplace_back("phase", scan);
    out.results["phase_scan"] = js;
    out.panels.push_back(pp);
  }
  out.panels.insert(out.panels.begin(), panel);
  char buf[160];
  std::snprintf(buf, sizeof buf, "entangle: fidelity %.4f, phase %.4f rad, H/V %.4f/%.4f, emission %.4f", r.fidelity,
                r.phase, r.channel_probability[0], r.channel_probability[1], r.emission_probability);
  return buf;
}

std::string cmd_map(RunContext& ctx, Outputs& out) {
  const SystemModel base = model_from(ctx.config, atom_from(ctx.config, ctx.config_dir));
  const json& b = ctx.config["map"];
  const SystemModel m = drive_only(base, drive_index(base, b));
  const DetectionChain chain = detection_from(ctx.config);
  const BichromaticOptions o = bichromatic_options(ctx, b);
  std::vector<double> alphas{0.0}, phis{0.0};
  if (b.contains("alpha_rad")) alphas = b["alpha_rad"].get<std::vector<double>>();
  if (b.contains("phi_rad")) phis = b["phi_rad"].get<std::vector<double>>();

  CsvTable t({"alpha_rad", "phi_rad", "fidelity", "phase_rad", "probability_h", "probability_v", "emission_probability",
              "shape_overlap"});
  json runs = json::array();
  double worst = 1.0;
  for (double a : alphas)
    for (double p : phis) {
      const JointStateReport r = map_state(a, p, m, chain, o);
      t.add_row({a, p, r.fidelity, r.phase, r.rho(0, 0).real(), r.rho(1, 1).real(), r.emission_probability,
                 r.shape_overlap});
      json j = report_json(r);
      j["alpha_rad"] = a;
      j["phi_rad"] = p;
      runs.push_back(j);
      worst = std::min(worst, r.fidelity);
    }
  out.tables.emplace_back("", t);
  out.results = {{"discard_scattered", o.discard_scattered}, {"runs", runs}};
  char buf[96];
  std::snprintf(buf, sizeof buf, "map: %zu runs, lowest fidelity %.4f", alphas.size() * phis.size(), worst);
  return buf;
}

// ------------------------------------------------------------------ qubit

std::string cmd_rabi(RunContext& ctx, Outputs& out) {
  const json& b = ctx.config["rabi"];
  const double omega = khz(b["rabi_khz"].get<double>());
  const int periods = get_or(b, "contrast_periods", 10);
  const double duration = b.contains("duration_us") ? us(b["duration_us"].get<double>()) : 20.0 * kTwoPi / omega;
  const int n = get_or(b, "points", 2001);
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = duration * i / (n - 1);

  std::vector<std::string> columns{"time_us"};
  std::vector<std::vector<double>> curves;
  json jc = json::array();
  Panel panel{"Carrier Rabi oscillations", "pulse length (us)", "D5/2 excitation", {}, {}};
  for (const auto& c : b["curves"]) {
    std::vector<ThermalMode> modes;
    json jm = json::array();
    for (const auto& m : c["modes"]) {
      modes.push_back({m["eta"].get<double>(), m["nbar"].get<double>()});
      jm.push_back({{"eta", modes.back().eta}, {"nbar", modes.back().nbar}});
    }
    curves.push_back(rabi_thermal(omega, modes, t));
    const std::string name = c["label"].get<std::string>();
    columns.push_back(name);
    const auto contrast = oscillation_contrast(omega, t, curves.back(), periods);
    double lowest = 1.0;
    for (double x : contrast)
      if (std::isfinite(x)) lowest = std::min(lowest, x);
    jc.push_back({{"label", name}, {"modes", jm}, {"contrast_per_period", contrast}, {"lowest_contrast", lowest}});
    Series s{name, {}, curves.back(), false};
    for (double ti : t) s.x.push_back(ti * 1e6);
    panel.series.push_back(s);
  }
  CsvTable table(columns);
  for (int i = 0; i < n; ++i) {
    std::vector<double> row{t[i] * 1e6};
    for (const auto& c : curves) row.push_back(c[i]);
    table.add_row(row);
  }
  out.tables.emplace_back("", table);
  out.results = {{"rabi_khz", b["rabi_khz"]}, {"contrast_periods", periods}, {"curves", jc}};
  out.panels.push_back(panel);
  std::string summary = "rabi:";
  for (const auto& c : jc) {
    char buf[96];
    std::snprintf(buf, sizeof buf, " %s lowest contrast %.3f;", c["label"].get<std::string>().c_str(),
                  c["lowest_contrast"].get<double>());
    summary += buf;
  }
  return summary;
}

json decay_json(const DecayFit& f) {
  auto finite = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"amplitude0", f.amplitude0}, {"amplitude0_error", f.amplitude0_error}, {"tau_us", finite(f.tau * 1e6)},
          {"tau_error_us", finite(f.tau_error * 1e6)}, {"cost", f.cost}};
}

std::string cmd_ramsey(RunContext& ctx, Outputs& out) {
  const json& b = ctx.config["ramsey"];
  RamseyModel model;
  model.amplitude0 = get_or(b, "amplitude0", model.amplitude0);
  model.tau = us(get_or(b, "tau_us", model.tau * 1e6));
  model.phase0 = get_or(b, "phase0_rad", 0.0);
  std::vector<double> waits;
  for (double v : range_values(b["wait_us"])) waits.push_back(us(v));
  const int np = get_or(b, "phase_points", 16);
  std::vector<double> phases(np);
  for (int j = 0; j < np; ++j) phases[j] = kTwoPi * j / np;
  RamseyOptions o;
  o.shots = get_or(b, "shots", 0);
  o.seed = ctx.seed;
  const RamseyResult r = ramsey_coherence(waits, phases, model, o);

  CsvTable t({"wait_us", "amplitude", "model_amplitude", "gaussian_fit", "exponential_fit"});
  CsvTable f({"wait_us", "phase_rad", "probability"});
  Panel panel{"Ramsey contrast", "waiting time (us)", "fringe amplitude", {}, {}};
  Series data{"extracted", {}, r.amplitude, true}, gauss{"gaussian fit", {}, {}, false}, expo{"exponential fit", {}, {}, false};
  for (std::size_t i = 0; i < waits.size(); ++i) {
    const double w = waits[i];
    const double xg = w / r.gaussian.tau, xe = w / r.exponential.tau;
    const double g = r.gaussian.amplitude0 * std::exp(-0.5 * xg * xg);
    const double e = r.exponential.amplitude0 * std::exp(-xe);
    t.add_row({w * 1e6, r.amplitude[i], model.amplitude(w), g, e});
    for (std::size_t j = 0; j < phases.size(); ++j) f.add_row({w * 1e6, phases[j], r.fringes[i][j]});
    data.x.push_back(w * 1e6);
    gauss.x.push_back(w * 1e6), gauss.y.push_back(g);
    expo.x.push_back(w * 1e6), expo.y.push_back(e);
  }
  panel.series = {data, gauss, expo};
  out.tables.emplace_back("", t);
  out.tables.emplace_back("fringes", f);
  out.results = {{"shots", o.shots},
                 {"amplitude", r.amplitude},
                 {"gaussian", decay_json(r.gaussian)},
                 {"exponential", decay_json(r.exponential)},
                 {"model_amplitude_at_50us", model.amplitude(50e-6)}};
  out.panels.push_back(panel);
  char buf[128];
  std::snprintf(buf, sizeof buf, "ramsey: gaussian tau %.1f us (A0 %.3f), exponential tau %.1f us", r.gaussian.tau * 1e6,
                r.gaussian.amplitude0, r.exponential.tau * 1e6);
  return buf;
}

// ------------------------------------------------------------------ localization

std::string cmd_localize(RunContext& ctx, const std::string& mode, Outputs& out) {
  const json& b = ctx.config["localize"];
  const double lambda = nm(b["wavelength_nm"].get<double>());
  const double waist = um(get_or(b, "waist_um", 13.2));
  const double theta = deg(get_or(b, "theta_deg", 4.0));
  const WavepacketSpread truth{um(get_or(b, "sigma_x_um", 4.7)), um(get_or(b, "sigma_y_um", 0.0)),
                               nm(get_or(b, "sigma_z_nm", 48.0))};
  char buf[160];

  if (mode == "visibility") {
    const double v = b.contains("visibility") ? b["visibility"].get<double>() : sigma_to_visibility(truth.sigma_z, lambda);
    const double sigma = visibility_to_sigma(v, lambda);
    const double gain = get_or(b, "piezo_gain_nm_per_v", 50.0) * 1e-9;
    const double amplitude = get_or(b, "amplitude", 1000.0), background = get_or(b, "background", 0.0);
    std::vector<double> piezo = b.contains("piezo_v") ? range_values(b["piezo_v"]) : range_values({{"start", 0.0}, {"stop", 20.0}, {"points", 201}});
    CsvTable t({"piezo_v", "displacement_nm", "rate"});
    Series s{"standing-wave scan", {}, {}, false};
    for (double p : piezo) {
      const double rate = standing_wave_scan(p, amplitude, v, background, gain, lambda);
      t.add_row({p, p * gain * 1e9, rate});
      s.x.push_back(p), s.y.push_back(rate);
    }
    out.tables.emplace_back("", t);
    out.results = {{"visibility", v}, {"sigma_z_nm", sigma * 1e9}, {"fringe_period_v", lambda / 2.0 / gain}};
    out.panels.push_back({"Standing-wave scan", "piezo voltage (V)", "count rate", {s}, {}});
    std::snprintf(buf, sizeof buf, "localize visibility: V = %.4f -> sigma_z = %.2f nm", v, sigma * 1e9);
    return buf;
  }

  if (mode == "coupling") {
    const double factor = coupling_reduction(truth.sigma_x, waist);
    CsvTable t({"sigma_x_um", "coupling_reduction"});
    Series s{"g_obs / g0", {}, {}, false};
    const double top = std::max(3.0 * truth.sigma_x, waist);
    for (int i = 0; i <= 100; ++i) {
      const double sx = top * i / 100.0;
      t.add_row({sx * 1e6, coupling_reduction(sx, waist)});
      s.x.push_back(sx * 1e6), s.y.push_back(coupling_reduction(sx, waist));
    }
    out.tables.emplace_back("", t);
    out.results = {{"sigma_x_um", truth.sigma_x * 1e6}, {"waist_um", waist * 1e6}, {"coupling_reduction", factor}};
    out.panels.push_back({"Coupling reduction from radial motion", "sigma_x (um)", "g_obs / g0", {s}, {truth.sigma_x * 1e6}});
    std::snprintf(buf, sizeof buf, "localize coupling: g_obs/g0 = %.4f at sigma_x = %.2f um, w0 = %.2f um", factor,
                  truth.sigma_x * 1e6, waist * 1e6);
    return buf;
  }

  if (mode != "fit") throw ConfigError("localize: unknown mode " + mode + " (fit, visibility, coupling)");
  ScanDataset data;
  bool synthetic = false;
  if (b.contains("data_file")) {
    std::filesystem::path p = b["data_file"].get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(ctx.config_dir) / p;
    data = read_scan_csv(p.string());
  } else {
    synthetic = true;
    const double amplitude = get_or(b, "amplitude", 1000.0), background = get_or(b, "background", 20.0);
    const double noise = get_or(b, "noise_fraction", 0.0);
    std::mt19937_64 rng(ctx.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto xs = b.contains("position_um") ? range_values(b["position_um"])
                                              : range_values({{"start", -30.0}, {"stop", 30.0}, {"points", 241}});
    for (double x : xs) {
      const double clean = background + amplitude * standing_wave_intensity(um(x), truth, lambda, waist, theta);
      data.position.push_back(um(x));
      data.counts.push_back(clean * (1.0 + noise * gauss(rng)));
      if (noise > 0.0) data.error.push_back(noise * clean);
    }
  }
  WaistFitGuess guess;
  const json& g = block(b, "guess");
  guess.sigma_x = um(get_or(g, "sigma_x_um", 4.0));
  guess.sigma_z = nm(get_or(g, "sigma_z_nm", 40.0));
  double peak = 0.0, floor = data.counts.empty() ? 0.0 : data.counts[0];
  for (double c : data.counts) peak = std::max(peak, c), floor = std::min(floor, c);
  guess.amplitude = get_or(g, "amplitude", (peak - floor) / 2.0);
  guess.center = um(get_or(g, "center_um", 0.0));
  guess.offset = get_or(g, "offset", floor);
  const WaistFit fit = fit_waist_scan(data, lambda, waist, theta, guess);

  CsvTable t({"position_um", "counts", "fit"});
  Series sd{"data", {}, data.counts, true}, sf{"fit", {}, {}, false};
  for (std::size_t i = 0; i < data.position.size(); ++i) {
    const double model = fit.offset + fit.amplitude * standing_wave_intensity(data.position[i] - fit.center, fit.spread,
                                                                              lambda, waist, theta);
    t.add_row({data.position[i] * 1e6, data.counts[i], model});
    sd.x.push_back(data.position[i] * 1e6);
    sf.x.push_back(data.position[i] * 1e6), sf.y.push_back(model);
  }
  out.tables.emplace_back("", t);
  out.results = {{"synthetic", synthetic},
                 {"points", data.position.size()},
                 {"sigma_x_um", fit.spread.sigma_x * 1e6},
                 {"sigma_x_error_um", fit.sigma_x_error * 1e6},
                 {"sigma_z_nm", fit.spread.sigma_z * 1e9},
                 {"sigma_z_error_nm", fit.sigma_z_error * 1e9},
                 {"sigma_y", "not constrained by the scan"},
                 {"amplitude", fit.amplitude},
                 {"amplitude_error", fit.amplitude_error},
                 {"center_um", fit.center * 1e6},
                 {"center_error_um", fit.center_error * 1e6},
                 {"offset", fit.offset},
                 {"offset_error", fit.offset_error},
                 {"cost", fit.cost},
                 {"iterations", fit.iterations},
                 {"degenerate", fit.degenerate},
                 {"coupling_reduction", coupling_reduction(fit.spread.sigma_x, waist)}};
  if (b.contains("fringes") && b.contains("span_um"))
    out.results["theta_from_fringes_deg"] =
        fringe_count_to_angle(b["fringes"].get<double>(), um(b["span_um"].get<double>()), lambda) * 180.0 / kPi;
  out.panels.push_back({"Waist scan", "ion position along the trap axis (um)", "counts", {sd, sf}, {}});
  std::snprintf(buf, sizeof buf, "localize fit: sigma_x = %.3f +- %.3f um, sigma_z = %.1f +- %.1f nm%s",
                fit.spread.sigma_x * 1e6, fit.sigma_x_error * 1e6, fit.spread.sigma_z * 1e9, fit.sigma_z_error * 1e9,
                fit.degenerate ? " (amplitude not significant)" : "");
  return buf;
}

std::string cmd_cavity(RunContext& ctx, const std::string& mode, Outputs& out) {
  if (mode != "waist" && mode != "g0") throw ConfigError("cavity: unknown mode " + mode + " (waist, g0)");
  const AtomData atom = atom_from(ctx.config, ctx.config_dir);
  const json& c = ctx.config["cavity"];
  const CavityGeometry geom = geometry_from(c);
  const double w0 = mode_waist(geom);
  const double gamma_pd = 0.5 * atom.manifold(Manifold::P32).partial_rate(Manifold::D52);
  const double coupling = g0(geom, gamma_pd);
  const double reduction = coupling_reduction(um(get_or(c, "radial_spread_um", 4.7)), w0);
  CsvTable t({"length_mm", "mirror_radius_mm", "wavelength_nm", "waist_um", "rayleigh_range_mm", "g0_mhz",
              "g_reduced_mhz"});
  t.add_row({geom.length * 1e3, geom.mirror_radius * 1e3, geom.wavelength * 1e9, w0 * 1e6, rayleigh_range(geom) * 1e3,
             to_mhz(coupling), to_mhz(reduction * coupling)});
  out.tables.emplace_back("", t);
  out.results = {{"waist_um", w0 * 1e6},
                 {"rayleigh_range_mm", rayleigh_range(geom) * 1e3},
                 {"g0_mhz", to_mhz(coupling)},
                 {"gamma_pd_mhz", to_mhz(gamma_pd)},
                 {"coupling_reduction", reduction},
                 {"g_reduced_mhz", to_mhz(reduction * coupling)}};
  char buf[128];
  if (mode == "waist")
    std::snprintf(buf, sizeof buf, "cavity waist: w0 = %.3f um", w0 * 1e6);
  else
    std::snprintf(buf, sizeof buf, "cavity g0: g0 = 2pi x %.4f MHz", to_mhz(coupling));
  return buf;
}

}  // namespace

std::string run_command(const std::string& command, const std::string& mode, RunContext& ctx) {
  validate_config(ctx.config, command);
  if (ctx.hash.empty()) ctx.hash = config_hash(ctx.config);
  if (ctx.base_name.empty()) ctx.base_name = mode.empty() ? command : command + "_" + mode;
  Outputs out;
  std::string summary;
  if (command == "plan") summary = cmd_plan(ctx, out);
  else if (command == "spectrum") summary = cmd_spectrum(ctx, out);
  else if (command == "sidebands") summary = cmd_sidebands(ctx, out);
  else if (command == "pulse") summary = cmd_pulse(ctx, out);
  else if (command == "overlap") summary = cmd_overlap(ctx, out);
  else if (command == "entangle") summary = cmd_entangle(ctx, out);
  else if (command == "map") summary = cmd_map(ctx, out);
  else if (command == "rabi") summary = cmd_rabi(ctx, out);
  else if (command == "ramsey") summary = cmd_ramsey(ctx, out);
  else if (command == "localize") summary = cmd_localize(ctx, mode, out);
  else if (command == "cavity") summary = cmd_cavity(ctx, mode, out);
  else throw ConfigError("unknown command " + command);
  emit(ctx, command, mode, out);
  if (!out.text.empty()) summary += "\n" + out.text;
  return summary;
}

const std::vector<FigureSpec>& figures() {
  static const std::vector<FigureSpec> list = {
      {"fig3a", "localize", "visibility"}, {"fig3b", "localize", "fit"}, {"fig4", "spectrum", ""},
      {"fig5", "spectrum", ""},            {"fig6a", "sidebands", ""},   {"fig6b", "sidebands", ""},
      {"fig8", "pulse", ""},               {"fig9", "rabi", ""},         {"fig10", "ramsey", ""}};
  return list;
}

std::string_view bundled_config(const std::string& figure) {
  if (figure == "fig3a") return bundled_config_fig3a();
  if (figure == "fig3b") return bundled_config_fig3b();
  if (figure == "fig4") return bundled_config_fig4();
  if (figure == "fig5") return bundled_config_fig5();
  if (figure == "fig6a") return bundled_config_fig6a();
  if (figure == "fig6b") return bundled_config_fig6b();
  if (figure == "fig8") return bundled_config_fig8();
  if (figure == "fig9") return bundled_config_fig9();
  if (figure == "fig10") return bundled_config_fig10();
  throw ConfigError("unknown figure id " + figure);
}

}  // namespace cavqed::cli
