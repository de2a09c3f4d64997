// SPDX-License-Identifier: Apache-2.0
#include "slotspe/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "slotspe/error.hpp"

namespace slotspe {

using nlohmann::json;

MeanStd mean_population_std(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean_population_std: empty input");
    MeanStd r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size()));
    return r;
}

ReportSummary summarize(std::span<const FoldReport> folds, double horizon, std::size_t replicates,
                        std::uint64_t seed) {
    if (folds.empty()) throw std::invalid_argument("report: no fold results");
    ReportSummary s;
    s.folds = folds.size();
    s.horizon = horizon;
    std::vector<double> c;
    SurvivalGroup high, low;
    for (const FoldReport& f : folds) {
        c.push_back(f.c_index);
        for (const PatientPrediction& p : f.predictions) {
            SurvivalGroup& g = p.high_risk ? high : low;
            g.times.push_back(p.time_months);
            g.events.push_back(p.censor == 0 ? 1 : 0);
        }
    }
    s.c_index = mean_population_std(c);
    if (!high.times.empty()) s.km_high = km_estimate(high.times, high.events);
    if (!low.times.empty()) s.km_low = km_estimate(low.times, low.events);
    if (!high.times.empty() && !low.times.empty()) {
        try {
            s.logrank = logrank_test(high.times, high.events, low.times, low.events);
        } catch (const std::invalid_argument&) {
        }
        try {
            s.rmst = bootstrap_stats(high, low, horizon, replicates, seed);
        } catch (const std::invalid_argument&) {
        }
    }
    return s;
}

std::string folds_csv(std::span<const FoldReport> folds) {
    std::ostringstream os;
    os.precision(17);
    os << "fold,c_index,n_patients\n";
    for (const FoldReport& f : folds) os << f.fold << ',' << f.c_index << ',' << f.predictions.size() << '\n';
    return os.str();
}

std::string summary_json(const ReportSummary& s) {
    json j{{"folds", s.folds},
           {"c_index_mean", s.c_index.mean},
           {"c_index_std", s.c_index.std},
           {"std_convention", "population"},
           {"rmst_horizon_months", s.horizon},
           {"logrank_p", nullptr},
           {"rmst_high", nullptr},
           {"rmst_low", nullptr},
           {"delta", nullptr},
           {"delta_ci", nullptr},
           {"delta_p", nullptr},
           {"ratio", nullptr},
           {"ratio_ci", nullptr}};
    if (s.logrank) j["logrank_p"] = s.logrank->p_value;
    if (s.rmst) {
        j["rmst_high"] = s.rmst->rmst_high;
        j["rmst_low"] = s.rmst->rmst_low;
        j["delta"] = s.rmst->delta;
        j["delta_ci"] = {s.rmst->delta_ci.lo, s.rmst->delta_ci.hi};
        j["delta_p"] = s.rmst->delta_p;
        j["ratio"] = s.rmst->ratio;
        j["ratio_ci"] = {s.rmst->ratio_ci.lo, s.rmst->ratio_ci.hi};
    }
    return j.dump(2) + "\n";
}

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;

std::string fmt(double v, int digits = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

std::string step_path(const KMEstimate& km, double t_max) {
    auto x = [&](double t) { return kLeft + (kWidth - kLeft - kRight) * std::min(t, t_max) / t_max; };
    auto y = [&](double s) { return kTop + (kHeight - kTop - kBottom) * (1.0 - s); };
    std::ostringstream d;
    d << "M" << fmt(x(0)) << "," << fmt(y(1.0));
    double s = 1.0;
    for (std::size_t i = 0; i < km.times.size() && km.times[i] <= t_max; ++i) {
        d << " H" << fmt(x(km.times[i])) << " V" << fmt(y(km.survival[i]));
        s = km.survival[i];
    }
    d << " H" << fmt(x(t_max)) << " V" << fmt(y(s));
    return d.str();
}

}  // namespace

std::string km_svg(const ReportSummary& s) {
    double t_max = s.horizon;
    if (!s.km_high.times.empty()) t_max = std::max(t_max, s.km_high.times.back());
    if (!s.km_low.times.empty()) t_max = std::max(t_max, s.km_low.times.back());

    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kTop, y1 = kHeight - kBottom;
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
       << "  <rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
       << "  <line x1=\"" << x0 << "\" y1=\"" << y1 << "\" x2=\"" << x1 << "\" y2=\"" << y1
       << "\" stroke=\"black\"/>\n"
       << "  <line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
       << "\" stroke=\"black\"/>\n"
       << "  <text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\" font-size=\"13\">Time (months)</text>\n"
       << "  <text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" font-size=\"13\" transform=\"rotate(-90 16 "
       << (y0 + y1) / 2 << ")\" text-anchor=\"middle\">Survival probability</text>\n"
       << "  <text x=\"" << x0 - 6 << "\" y=\"" << y0 + 4 << "\" text-anchor=\"end\" font-size=\"11\">1.0</text>\n"
       << "  <text x=\"" << x0 - 6 << "\" y=\"" << y1 + 4 << "\" text-anchor=\"end\" font-size=\"11\">0.0</text>\n"
       << "  <text x=\"" << x1 << "\" y=\"" << y1 + 16 << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(t_max, 1)
       << "</text>\n"
       << "  <path id=\"high-risk\" d=\"" << step_path(s.km_high, t_max)
       << "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n"
       << "  <path id=\"low-risk\" d=\"" << step_path(s.km_low, t_max)
       << "\" fill=\"none\" stroke=\"#2471a3\" stroke-width=\"2\"/>\n";

    std::vector<std::string> notes;
    notes.push_back("High risk (red), low risk (blue)");
    notes.push_back("Log-rank p = " + (s.logrank ? fmt(s.logrank->p_value, 4) : std::string("n/a")));
    if (s.rmst) {
        notes.push_back("Delta RMST (High-Low) = " + fmt(s.rmst->delta, 1) + " [" + fmt(s.rmst->delta_ci.lo, 1) +
                        " " + fmt(s.rmst->delta_ci.hi, 1) + "]");
        notes.push_back("Ratio (High/Low) = " + fmt(s.rmst->ratio, 2) + " [" + fmt(s.rmst->ratio_ci.lo, 2) + " " +
                        fmt(s.rmst->ratio_ci.hi, 2) + "]");
    } else {
        notes.push_back("Delta RMST = n/a");
        notes.push_back("Ratio = n/a");
    }
    for (std::size_t i = 0; i < notes.size(); ++i)
        os << "  <text x=\"" << x1 - 4 << "\" y=\"" << y0 + 16 + 16 * i
           << "\" text-anchor=\"end\" font-size=\"12\">" << notes[i] << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

void write_report(std::span<const FoldReport> folds, const std::filesystem::path& out_dir, double horizon,
                  std::size_t replicates, std::uint64_t seed) {
    const ReportSummary s = summarize(folds, horizon, replicates, seed);
    std::filesystem::create_directories(out_dir);
    auto put = [&](const char* name, const std::string& text) {
        std::ofstream out(out_dir / name, std::ios::trunc);
        if (!out) throw DataError("cannot write " + (out_dir / name).string());
        out << text;
    };
    put("folds.csv", folds_csv(folds));
    put("summary.json", summary_json(s));
    put("km.svg", km_svg(s));
}

}  // namespace slotspe
