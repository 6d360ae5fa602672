#include "fcrn/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "fcrn/error.hpp"

namespace fcrn {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    cur += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct CsvFile {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // (line number, fields)
};

CsvFile read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    CsvFile f;
    f.path = path;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        for (auto& x : fields) x = trim(x);
        if (!have_header) {
            f.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != f.header.size()) {
            throw data_error(path + ": row " + std::to_string(lineno) + ": expected " + std::to_string(f.header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        }
        f.rows.emplace_back(lineno, std::move(fields));
    }
    if (in.bad()) throw io_error("read failure on '" + path + "'");
    if (!have_header) throw data_error(path + ": missing header row");
    return f;
}

[[noreturn]] void cell_error(const CsvFile& f, std::size_t lineno, const std::string& column, const std::string& what) {
    throw data_error(f.path + ": row " + std::to_string(lineno) + ", column '" + column + "': " + what);
}

double parse_double(const CsvFile& f, std::size_t lineno, const std::string& column, const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        cell_error(f, lineno, column, "cannot parse '" + s + "' as a finite number");
    }
    return v;
}

int parse_int(const CsvFile& f, std::size_t lineno, const std::string& column, const std::string& s) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        cell_error(f, lineno, column, "cannot parse '" + s + "' as an integer");
    }
    return v;
}

void expect_header(const CsvFile& f, const std::vector<std::string>& leading) {
    if (f.header.size() < leading.size()) throw data_error(f.path + ": header too short");
    for (std::size_t k = 0; k < leading.size(); ++k) {
        if (f.header[k] != leading[k]) {
            throw data_error(f.path + ": header column " + std::to_string(k + 1) + " must be '" + leading[k] +
                             "', found '" + f.header[k] + "'");
        }
    }
}

std::ofstream open_out(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) throw io_error("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw io_error("write failure on '" + path + "'");
}

}  // namespace

Dataset read_dataset(const std::string& subjects_path, const std::string& curves_path) {
    const CsvFile sf = read_csv(subjects_path);
    expect_header(sf, {"id", "time", "cause"});
    Dataset ds;
    ds.covariate_names.assign(sf.header.begin() + 3, sf.header.end());
    {
        std::map<std::string, int> seen;
        for (const auto& name : ds.covariate_names) {
            if (name.empty()) throw data_error(subjects_path + ": empty covariate name in header");
            if (seen[name]++) throw data_error(subjects_path + ": duplicate covariate column '" + name + "'");
        }
    }
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& [lineno, fields] : sf.rows) {
        SubjectRecord r;
        r.id = fields[0];
        if (r.id.empty()) cell_error(sf, lineno, "id", "empty id");
        if (index.count(r.id)) cell_error(sf, lineno, "id", "duplicate id '" + r.id + "'");
        r.time = parse_double(sf, lineno, "time", fields[1]);
        if (r.time < 0.0) cell_error(sf, lineno, "time", "negative time");
        r.cause = parse_int(sf, lineno, "cause", fields[2]);
        if (r.cause < 0) cell_error(sf, lineno, "cause", "negative cause");
        for (std::size_t j = 0; j < ds.covariate_names.size(); ++j) {
            const auto& cell = fields[3 + j];
            if (cell.empty() || cell == "NA" || cell == "nan") {
                r.x.push_back(kMissing);
                r.missing_mask.push_back(true);
            } else {
                r.x.push_back(parse_double(sf, lineno, ds.covariate_names[j], cell));
                r.missing_mask.push_back(false);
            }
        }
        index.emplace(r.id, ds.subjects.size());
        ds.subjects.push_back(std::move(r));
    }

    if (!curves_path.empty()) {
        const CsvFile cf = read_csv(curves_path);
        expect_header(cf, {"id", "signal_name", "tau", "value"});
        if (cf.header.size() != 4) throw data_error(curves_path + ": expected exactly 4 columns");
        std::map<std::string, std::size_t> signal_index;
        std::vector<std::vector<std::vector<std::pair<double, double>>>> points(ds.size());
        std::vector<std::tuple<std::size_t, std::size_t, double, double>> samples;
        for (const auto& [lineno, fields] : cf.rows) {
            const auto it = index.find(fields[0]);
            if (it == index.end()) cell_error(cf, lineno, "id", "unknown subject '" + fields[0] + "'");
            if (fields[1].empty()) cell_error(cf, lineno, "signal_name", "empty signal name");
            auto sit = signal_index.find(fields[1]);
            if (sit == signal_index.end()) {
                sit = signal_index.emplace(fields[1], ds.signal_names.size()).first;
                ds.signal_names.push_back(fields[1]);
            }
            const double tau = parse_double(cf, lineno, "tau", fields[2]);
            if (tau < 0.0 || tau > 1.0) cell_error(cf, lineno, "tau", "tau outside [0, 1]");
            samples.emplace_back(it->second, sit->second, tau, parse_double(cf, lineno, "value", fields[3]));
        }
        for (auto& p : points) p.resize(ds.signal_names.size());
        for (const auto& [i, s, tau, v] : samples) points[i][s].emplace_back(tau, v);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            auto& subj = ds.subjects[i];
            for (std::size_t s = 0; s < ds.signal_names.size(); ++s) {
                auto& pts = points[i][s];
                if (pts.empty()) {
                    throw data_error(curves_path + ": subject '" + subj.id + "' has no samples for signal '" +
                                     ds.signal_names[s] + "'");
                }
                std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
                FunctionalCurve c;
                c.name = ds.signal_names[s];
                for (const auto& [tau, v] : pts) {
                    c.taus.push_back(tau);
                    c.values.push_back(v);
                }
                try {
                    c.validate();
                } catch (const Error& e) {
                    throw data_error(curves_path + ": subject '" + subj.id + "': " + e.what());
                }
                subj.curves.push_back(std::move(c));
            }
        }
    }
    return ds;
}

void write_subjects_csv(const Dataset& ds, const std::string& path) {
    auto out = open_out(path);
    out << "id,time,cause";
    for (const auto& n : ds.covariate_names) out << ',' << csv_field(n);
    out << '\n';
    for (const auto& s : ds.subjects) {
        out << csv_field(s.id) << ',' << format_double(s.time) << ',' << s.cause;
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            out << ',';
            if (!s.missing_mask[j]) out << format_double(s.x[j]);
        }
        out << '\n';
    }
    finish(out, path);
}

void write_curves_csv(const Dataset& ds, const std::string& path) {
    auto out = open_out(path);
    out << "id,signal_name,tau,value\n";
    for (const auto& s : ds.subjects) {
        for (const auto& c : s.curves) {
            for (std::size_t j = 0; j < c.taus.size(); ++j) {
                out << csv_field(s.id) << ',' << csv_field(c.name) << ',' << format_double(c.taus[j]) << ','
                    << format_double(c.values[j]) << '\n';
            }
        }
    }
    finish(out, path);
}

void write_imputation(const Dataset& ds, const Matrix& imputed, const MissingMask& mask,
                      const std::string& values_path, const std::string& mask_path) {
    if (static_cast<std::size_t>(imputed.rows()) != ds.size() || static_cast<std::size_t>(imputed.cols()) != ds.num_covariates()) {
        throw invalid_argument("write_imputation: matrix shape does not match dataset");
    }
    auto vals = open_out(values_path);
    auto msk = open_out(mask_path);
    vals << "id";
    msk << "id";
    for (const auto& n : ds.covariate_names) {
        vals << ',' << csv_field(n);
        msk << ',' << csv_field(n);
    }
    vals << '\n';
    msk << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        vals << csv_field(ds.subjects[i].id);
        msk << csv_field(ds.subjects[i].id);
        for (std::size_t j = 0; j < ds.num_covariates(); ++j) {
            const auto I = static_cast<Eigen::Index>(i);
            const auto J = static_cast<Eigen::Index>(j);
            vals << ',' << format_double(imputed(I, J));
            msk << ',' << (mask(I, J) ? 1 : 0);
        }
        vals << '\n';
        msk << '\n';
    }
    finish(vals, values_path);
    finish(msk, mask_path);
}

PredictionTable make_prediction_table(const FCRNModel& model, const Dataset& ds, const std::vector<CifPrediction>& preds) {
    if (preds.size() != ds.size()) throw invalid_argument("make_prediction_table: one prediction per subject required");
    PredictionTable t;
    t.head = model.spec.head;
    t.grid = model.grid;
    if (model.spec.head == HeadType::CauseSpecific) {
        t.causes.resize(static_cast<std::size_t>(model.spec.num_causes));
        std::iota(t.causes.begin(), t.causes.end(), 1);
    } else {
        t.causes = {model.spec.target_cause};
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        t.ids.push_back(ds.subjects[i].id);
        t.cif.push_back(preds[i].cif);
        if (t.head == HeadType::CauseSpecific) t.survival.push_back(preds[i].survival);
    }
    return t;
}

void write_predictions(const PredictionTable& table, const std::string& path) {
    auto out = open_out(path);
    out << "id,interval,time";
    for (int c : table.causes) out << ",cif_" << c;
    if (table.head == HeadType::CauseSpecific) out << ",survival";
    out << '\n';
    const int L = table.grid.intervals();
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        for (int l = 0; l <= L; ++l) {
            const auto li = static_cast<std::size_t>(l);
            out << csv_field(table.ids[i]) << ',' << l << ',' << format_double(table.grid.cut(l));
            for (std::size_t c = 0; c < table.causes.size(); ++c) out << ',' << format_double(table.cif[i][c][li]);
            if (table.head == HeadType::CauseSpecific) out << ',' << format_double(table.survival[i][li]);
            out << '\n';
        }
    }
    finish(out, path);
}

PredictionTable read_predictions(const std::string& path) {
    const CsvFile f = read_csv(path);
    expect_header(f, {"id", "interval", "time"});
    PredictionTable t;
    std::size_t ncif = 0;
    for (std::size_t k = 3; k < f.header.size(); ++k) {
        const auto& h = f.header[k];
        if (h == "survival") {
            if (k + 1 != f.header.size()) throw data_error(path + ": 'survival' must be the last column");
            t.head = HeadType::CauseSpecific;
        } else if (h.rfind("cif_", 0) == 0) {
            int c = 0;
            const auto res = std::from_chars(h.data() + 4, h.data() + h.size(), c);
            if (res.ec != std::errc() || res.ptr != h.data() + h.size() || c < 1) {
                throw data_error(path + ": bad column name '" + h + "'");
            }
            t.causes.push_back(c);
            ++ncif;
        } else {
            throw data_error(path + ": unexpected column '" + h + "'");
        }
    }
    if (ncif == 0) throw data_error(path + ": no cif_<m> columns");
    const bool has_surv = f.header.back() == "survival";
    t.head = has_surv ? HeadType::CauseSpecific : HeadType::Subdistribution;

    int L = -1;
    double width = 0.0;
    for (const auto& [lineno, fields] : f.rows) {
        const int l = parse_int(f, lineno, "interval", fields[1]);
        const double time = parse_double(f, lineno, "time", fields[2]);
        if (l < 0) cell_error(f, lineno, "interval", "negative interval");
        if (l == 0) {
            if (L >= 0 && static_cast<int>(t.cif.back()[0].size()) != L + 1) {
                cell_error(f, lineno, "interval", "previous subject has an incomplete interval sequence");
            }
            t.ids.push_back(fields[0]);
            t.cif.emplace_back(ncif);
            if (has_surv) t.survival.emplace_back();
        } else {
            if (t.ids.empty() || fields[0] != t.ids.back() || static_cast<int>(t.cif.back()[0].size()) != l) {
                cell_error(f, lineno, "interval", "intervals must run 0..L consecutively per subject");
            }
            if (l == 1) {
                if (width == 0.0) {
                    width = time;
                    if (!(width > 0.0)) cell_error(f, lineno, "time", "interval width must be positive");
                } else if (time != width) {
                    cell_error(f, lineno, "time", "inconsistent interval width");
                }
            }
        }
        for (std::size_t c = 0; c < ncif; ++c) t.cif.back()[c].push_back(parse_double(f, lineno, f.header[3 + c], fields[3 + c]));
        if (has_surv) t.survival.back().push_back(parse_double(f, lineno, "survival", fields.back()));
        L = std::max(L, l);
    }
    for (const auto& c : t.cif) {
        if (static_cast<int>(c[0].size()) != L + 1) throw data_error(path + ": subjects cover different interval ranges");
    }
    if (L >= 1) t.grid = TimeGrid(width, L);
    return t;
}

void write_scores(const std::vector<ScoreBlock>& blocks, const std::string& path) {
    auto out = open_out(path);
    out << "horizon,cause,time,bs,cumulative_ibs\n";
    for (const auto& b : blocks) {
        const auto cum = cumulative_ibs(b.curve);
        for (std::size_t k = 0; k < b.curve.times.size(); ++k) {
            out << format_double(b.horizon) << ',' << b.cause << ',' << format_double(b.curve.times[k]) << ','
                << format_double(b.curve.scores[k]) << ',' << format_double(cum[k]) << '\n';
        }
    }
    finish(out, path);
}

void write_ibs_summary(const std::vector<ScoreBlock>& blocks, const std::string& path) {
    auto out = open_out(path);
    out << "horizon,cause,ibs\n";
    for (const auto& b : blocks) out << format_double(b.horizon) << ',' << b.cause << ',' << format_double(b.curve.ibs) << '\n';
    finish(out, path);
}

void write_text(const std::string& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    finish(out, path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace fcrn
