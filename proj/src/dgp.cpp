#include "longconf/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "longconf/error.hpp"
#include "longconf/glm.hpp"

namespace longconf {

Scenario parse_scenario(const std::string& name) {
    if (name == "tv-binary-u") return Scenario::TvBinaryU;
    if (name == "tv-normal-u") return Scenario::TvNormalU;
    if (name == "two-tv-u") return Scenario::TwoTvU;
    if (name == "ti-binary-u") return Scenario::TiBinaryU;
    if (name == "no-u") return Scenario::NoU;
    throw InvalidInput("unknown scenario '" + name + "'");
}

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::TvBinaryU: return "tv-binary-u";
        case Scenario::TvNormalU: return "tv-normal-u";
        case Scenario::TwoTvU: return "two-tv-u";
        case Scenario::TiBinaryU: return "ti-binary-u";
        case Scenario::NoU: return "no-u";
    }
    return "?";
}

std::string bits_of(std::span<const int> v) {
    std::string s;
    s.reserve(v.size());
    for (int b : v) s.push_back(static_cast<char>('0' + b));
    return s;
}

namespace {

DgpNode bern(std::string name, NodeRole role, std::size_t visit, std::size_t slot, double prob) {
    DgpNode n;
    n.name = std::move(name);
    n.role = role;
    n.visit = visit;
    n.slot = slot;
    n.dist = NodeDist::Bernoulli;
    n.prob = prob;
    return n;
}

DgpNode logistic(std::string name, NodeRole role, std::size_t visit, std::size_t slot,
                 double intercept, std::vector<NodeTerm> terms) {
    DgpNode n;
    n.name = std::move(name);
    n.role = role;
    n.visit = visit;
    n.slot = slot;
    n.dist = NodeDist::Logistic;
    n.intercept = intercept;
    n.terms = std::move(terms);
    return n;
}

DgpNode normal(std::string name, NodeRole role, std::size_t visit, std::size_t slot,
               double intercept, double sd, std::vector<NodeTerm> terms) {
    DgpNode n;
    n.name = std::move(name);
    n.role = role;
    n.visit = visit;
    n.slot = slot;
    n.dist = NodeDist::Normal;
    n.intercept = intercept;
    n.sd = sd;
    n.terms = std::move(terms);
    return n;
}

constexpr auto C = NodeRole::Covariate;
constexpr auto T = NodeRole::Treatment;
constexpr auto L = NodeRole::Latent;
constexpr auto O = NodeRole::Outcome;

// Outcome mean shared by the scenarios with visit-weighted X and U effects.
std::vector<NodeTerm> outcome_terms(double x1, double x2, double x3) {
    return {{"A3", -4}, {"A2", -3}, {"A1", -2}, {"X1", x1}, {"X2", x2}, {"X3", x3}};
}

std::vector<DgpNode> tv_binary_u() {
    auto y = outcome_terms(-1, -2, -3);
    y.insert(y.end(), {{"U1", 1}, {"U2", 2}, {"U3", 3}});
    return {
        bern("U1", L, 0, 0, 0.5),
        bern("X1", C, 0, 0, 0.5),
        logistic("A1", T, 0, 0, 1.0, {{"X1", 0.5}, {"U1", -0.5}}),
        logistic("U2", L, 1, 0, 0.0, {{"U1", -0.5}, {"A1", -0.5}}),
        logistic("X2", C, 1, 0, 0.0, {{"X1", 0.5}, {"A1", 0.5}}),
        logistic("A2", T, 1, 0, 1.0,
                 {{"A1", -0.3}, {"X1", 0.4}, {"X2", 0.5}, {"U1", -0.4}, {"U2", -0.5}}),
        logistic("U3", L, 2, 0, 0.0, {{"U2", -0.5}, {"A2", -0.5}}),
        logistic("X3", C, 2, 0, 0.0, {{"X2", 0.5}, {"A2", 0.5}}),
        logistic("A3", T, 2, 0, 1.0,
                 {{"A2", -0.3}, {"X1", 0.4}, {"X2", 0.5}, {"X3", 0.6}, {"U1", -0.3},
                  {"U2", -0.4}, {"U3", -0.5}}),
        normal("Y", O, 2, 0, 10.0, 2.0, y),
    };
}

std::vector<DgpNode> tv_normal_u() {
    auto y = outcome_terms(-1, -2, -3);
    y.insert(y.end(), {{"U1", 1}, {"U2", 2}, {"U3", 3}});
    return {
        normal("U1", L, 0, 0, 0.5, 2.0, {}),
        bern("X1", C, 0, 0, 0.5),
        logistic("A1", T, 0, 0, 0.0, {{"X1", 0.5}, {"U1", -0.5}}),
        normal("U2", L, 1, 0, 0.0, 2.0, {{"U1", -0.5}, {"A1", -0.5}}),
        logistic("X2", C, 1, 0, 0.0, {{"X1", 0.5}, {"A1", 0.5}}),
        logistic("A2", T, 1, 0, 0.0,
                 {{"A1", -0.3}, {"X1", 0.4}, {"X2", 0.5}, {"U1", -0.2}, {"U2", -0.2}}),
        normal("U3", L, 2, 0, 0.0, 2.0, {{"U2", -0.5}, {"A2", -0.5}}),
        logistic("X3", C, 2, 0, 0.0, {{"X2", 0.5}, {"A2", 0.5}}),
        logistic("A3", T, 2, 0, 0.0,
                 {{"A2", -0.3}, {"X1", 0.4}, {"X2", 0.5}, {"X3", 0.6}, {"U1", -0.4},
                  {"U2", -0.5}, {"U3", -0.6}}),
        normal("Y", O, 2, 0, 10.0, 2.0, y),
    };
}

// U{j} is the binary confounder (slot 0), V{j} the normal one (slot 1).
std::vector<DgpNode> two_tv_u() {
    auto y = outcome_terms(-1, -2, -3);
    y.insert(y.end(), {{"U1", 1}, {"U2", 2}, {"U3", 3}, {"V1", 0.1}, {"V2", 0.1}, {"V3", 0.1}});
    return {
        bern("U1", L, 0, 0, 0.5),
        normal("V1", L, 0, 1, 0.5, 2.0, {}),
        bern("X1", C, 0, 0, 0.5),
        logistic("A1", T, 0, 0, 0.0, {{"X1", 0.5}, {"U1", -0.5}, {"V1", -0.2}}),
        logistic("U2", L, 1, 0, 0.0, {{"U1", -0.5}, {"A1", -0.5}}),
        normal("V2", L, 1, 1, 0.0, 2.0, {{"V1", -0.5}, {"A1", -0.5}}),
        logistic("X2", C, 1, 0, 0.0, {{"X1", 0.5}, {"A1", 0.5}}),
        logistic("A2", T, 1, 0, 1.0,
                 {{"A1", -0.3}, {"X1", 0.4}, {"X2", 0.5}, {"U1", -0.2}, {"U2", -0.4},
                  {"V1", -0.1}, {"V2", -0.1}}),
        logistic("U3", L, 2, 0, 0.0, {{"U2", -0.5}, {"A2", -0.5}}),
        normal("V3", L, 2, 1, 0.0, 2.0, {{"V2", -0.5}, {"A2", -0.5}}),
        logistic("X3", C, 2, 0, 0.0, {{"X2", 0.5}, {"A2", 0.5}}),
        logistic("A3", T, 2, 0, 1.0,
                 {{"A2", -0.3}, {"X1", 0.3}, {"X2", 0.5}, {"X3", 0.6}, {"U1", -0.2},
                  {"U2", -0.3}, {"U3", -0.4}, {"V1", -0.1}, {"V2", -0.1}, {"V3", -0.1}}),
        normal("Y", O, 2, 0, 10.0, 2.0, y),
    };
}

std::vector<DgpNode> ti_binary_u() {
    auto y = outcome_terms(-1, -2, -3);
    y.push_back({"U", 3});
    return {
        bern("U", L, 0, 0, 0.4),
        bern("X1", C, 0, 0, 0.5),
        logistic("A1", T, 0, 0, 0.0, {{"X1", 0.5}, {"U", -0.5}}),
        logistic("X2", C, 1, 0, 0.0, {{"X1", 0.5}, {"A1", 0.5}}),
        logistic("A2", T, 1, 0, 0.0, {{"A1", 0.5}, {"X1", 0.5}, {"X2", 0.5}, {"U", -0.5}}),
        logistic("X3", C, 2, 0, 0.0, {{"X2", 0.5}, {"A2", 0.5}}),
        logistic("A3", T, 2, 0, 0.0,
                 {{"A2", 0.5}, {"X1", 0.5}, {"X2", 0.5}, {"X3", 0.5}, {"U", -0.5}}),
        normal("Y", O, 2, 0, 10.0, 2.0, y),
    };
}

std::vector<DgpNode> no_u() {
    return {
        bern("X1", C, 0, 0, 0.5),
        logistic("A1", T, 0, 0, -0.1, {{"X1", 0.2}}),
        logistic("X2", C, 1, 0, 0.0, {{"X1", 0.5}, {"A1", 0.5}}),
        logistic("A2", T, 1, 0, -0.1, {{"A1", -0.2}, {"X1", 0.1}, {"X2", 0.2}}),
        logistic("X3", C, 2, 0, 0.0, {{"X2", 0.5}, {"A2", 0.5}}),
        logistic("A3", T, 2, 0, -0.1, {{"A2", -0.2}, {"X1", 0.1}, {"X2", 0.2}, {"X3", 0.3}}),
        normal("Y", O, 2, 0, 10.0, 2.0, outcome_terms(-0.5, -1.0, -1.5)),
    };
}

// Index-resolved form of a ScenarioSpec used by the samplers and oracles.
struct Program {
    struct Node {
        NodeDist dist;
        NodeRole role;
        std::size_t visit, slot;
        double prob, intercept, sd;
        std::vector<std::pair<std::size_t, double>> terms;
    };
    std::vector<Node> nodes;
    std::size_t visits = 0;
    std::size_t p = 0;
    std::vector<std::size_t> latent_per_visit;
    std::vector<std::size_t> treat_node;                  // per visit
    std::vector<std::vector<std::size_t>> covariate_node;  // [visit][slot]
    std::vector<std::vector<std::size_t>> latent_node;     // [visit][slot]
    std::size_t outcome = 0;

    double linear(std::size_t k, const std::vector<double>& v) const {
        const auto& nd = nodes[k];
        double m = nd.intercept;
        for (const auto& [par, c] : nd.terms) m += c * v[par];
        return m;
    }
    double prob1(std::size_t k, const std::vector<double>& v) const {
        const auto& nd = nodes[k];
        return nd.dist == NodeDist::Bernoulli ? nd.prob : inv_logit(linear(k, v));
    }
};

Program compile(const ScenarioSpec& spec) {
    Program prog;
    std::map<std::string, std::size_t> index;
    std::size_t visits = 0;
    for (const auto& n : spec.nodes) visits = std::max(visits, n.visit + 1);
    prog.visits = visits;
    prog.treat_node.assign(visits, spec.nodes.size());
    prog.covariate_node.assign(visits, {});
    prog.latent_node.assign(visits, {});
    bool have_outcome = false;
    for (std::size_t k = 0; k < spec.nodes.size(); ++k) {
        const auto& n = spec.nodes[k];
        if (have_outcome) throw InvalidInput("scenario: outcome node must be last");
        Program::Node c{n.dist, n.role, n.visit, n.slot, n.prob, n.intercept, n.sd, {}};
        for (const auto& t : n.terms) {
            auto it = index.find(t.parent);
            if (it == index.end()) {
                throw InvalidInput("scenario: node " + n.name + " references unknown or later node " +
                                   t.parent);
            }
            c.terms.emplace_back(it->second, t.coef);
        }
        if (n.dist == NodeDist::Bernoulli && !(n.prob > 0.0 && n.prob < 1.0)) {
            throw InvalidInput("scenario: node " + n.name + " probability must lie in (0,1)");
        }
        switch (n.role) {
            case NodeRole::Treatment:
                if (n.dist == NodeDist::Normal) throw InvalidInput("treatment nodes must be binary");
                if (prog.treat_node[n.visit] != spec.nodes.size()) {
                    throw InvalidInput("scenario: two treatment nodes at one visit");
                }
                prog.treat_node[n.visit] = k;
                break;
            case NodeRole::Covariate: {
                if (n.dist == NodeDist::Normal) throw InvalidInput("covariate nodes must be binary");
                auto& slots = prog.covariate_node[n.visit];
                if (slots.size() <= n.slot) slots.resize(n.slot + 1, spec.nodes.size());
                slots[n.slot] = k;
                break;
            }
            case NodeRole::Latent: {
                auto& slots = prog.latent_node[n.visit];
                if (slots.size() <= n.slot) slots.resize(n.slot + 1, spec.nodes.size());
                slots[n.slot] = k;
                break;
            }
            case NodeRole::Outcome:
                if (n.dist != NodeDist::Normal) throw InvalidInput("outcome node must be Normal");
                prog.outcome = k;
                have_outcome = true;
                break;
        }
        index[n.name] = k;
        prog.nodes.push_back(std::move(c));
    }
    if (!have_outcome) throw InvalidInput("scenario: missing outcome node");
    prog.p = prog.covariate_node.empty() ? 0 : prog.covariate_node[0].size();
    for (std::size_t j = 0; j < visits; ++j) {
        if (prog.treat_node[j] == spec.nodes.size()) {
            throw InvalidInput("scenario: visit " + std::to_string(j + 1) + " has no treatment");
        }
        if (prog.covariate_node[j].size() != prog.p || prog.p == 0) {
            throw InvalidInput("scenario: covariate count differs across visits");
        }
        for (auto k : prog.covariate_node[j]) {
            if (k == spec.nodes.size()) throw InvalidInput("scenario: covariate slots not contiguous");
        }
        for (auto k : prog.latent_node[j]) {
            if (k == spec.nodes.size()) throw InvalidInput("scenario: latent slots not contiguous");
        }
        prog.latent_per_visit.push_back(prog.latent_node[j].size());
    }
    return prog;
}

// Draws node k given values of earlier nodes; A nodes are clamped when regime is non-null.
double draw_node(const Program& prog, std::size_t k, const std::vector<double>& v, RandomStream& rs,
                 const int* regime, bool outcome_noise) {
    const auto& nd = prog.nodes[k];
    if (nd.role == NodeRole::Treatment && regime != nullptr) return regime[nd.visit];
    switch (nd.dist) {
        case NodeDist::Bernoulli: return rs.uniform() < nd.prob ? 1.0 : 0.0;
        case NodeDist::Logistic: return rs.uniform() < prog.prob1(k, v) ? 1.0 : 0.0;
        case NodeDist::Normal: {
            const double m = prog.linear(k, v);
            if (nd.role == NodeRole::Outcome && !outcome_noise) return m;
            return m + nd.sd * rs.normal();
        }
    }
    return 0.0;
}

// E[Y mean | nodes < k fixed in v] with treatments at and after k clamped to regime. Binary only.
double expect_from(const Program& prog, std::size_t k, std::vector<double>& v, const int* regime) {
    const auto& nd = prog.nodes[k];
    if (nd.role == NodeRole::Outcome) return prog.linear(k, v);
    if (nd.role == NodeRole::Treatment) {
        v[k] = regime[nd.visit];
        return expect_from(prog, k + 1, v, regime);
    }
    if (nd.dist == NodeDist::Normal) {
        throw InvalidInput("exact enumeration requires binary stochastic nodes; use Monte Carlo");
    }
    const double p1 = prog.prob1(k, v);
    v[k] = 1.0;
    const double e1 = expect_from(prog, k + 1, v, regime);
    v[k] = 0.0;
    const double e0 = expect_from(prog, k + 1, v, regime);
    return p1 * e1 + (1.0 - p1) * e0;
}

// Mean outcome of one forward trajectory from node k with treatments clamped.
double sample_from(const Program& prog, std::size_t k, std::vector<double>& v, const int* regime,
                   RandomStream& rs) {
    for (std::size_t q = k; q < prog.nodes.size(); ++q) v[q] = draw_node(prog, q, v, rs, regime, false);
    return v[prog.outcome];
}

std::vector<int> regime_vector(const TreatmentRegime& r, std::size_t visits) {
    if (r.visits() != visits) throw InvalidInput("regime length does not match the scenario's visits");
    return {r.values().begin(), r.values().end()};
}

}  // namespace

ScenarioSpec ScenarioSpec::defaults(Scenario s, std::size_t n) {
    ScenarioSpec spec;
    spec.scenario = s;
    spec.n = n;
    switch (s) {
        case Scenario::TvBinaryU: spec.nodes = tv_binary_u(); break;
        case Scenario::TvNormalU: spec.nodes = tv_normal_u(); break;
        case Scenario::TwoTvU: spec.nodes = two_tv_u(); break;
        case Scenario::TiBinaryU: spec.nodes = ti_binary_u(); break;
        case Scenario::NoU: spec.nodes = no_u(); break;
    }
    return spec;
}

std::size_t ScenarioSpec::visits() const { return compile(*this).visits; }

std::vector<std::size_t> ScenarioSpec::latent_per_visit() const {
    return compile(*this).latent_per_visit;
}

bool ScenarioSpec::all_binary() const {
    return std::all_of(nodes.begin(), nodes.end(), [](const DgpNode& n) {
        return n.role == NodeRole::Outcome || n.dist != NodeDist::Normal;
    });
}

namespace {

std::pair<std::string, std::string> split_key(const std::string& key) {
    auto dot = key.find('.');
    if (dot == std::string::npos) throw InvalidInput("coefficient key must be <node>.<param>: " + key);
    return {key.substr(0, dot), key.substr(dot + 1)};
}

}  // namespace

double ScenarioSpec::coefficient(const std::string& key) const {
    auto [node, param] = split_key(key);
    for (const auto& n : nodes) {
        if (n.name != node) continue;
        if (param == "intercept") return n.intercept;
        if (param == "prob") return n.prob;
        if (param == "sd") return n.sd;
        for (const auto& t : n.terms) {
            if (t.parent == param) return t.coef;
        }
    }
    throw InvalidInput("unknown coefficient " + key);
}

void ScenarioSpec::set_coefficient(const std::string& key, double value) {
    auto [node, param] = split_key(key);
    for (auto& n : nodes) {
        if (n.name != node) continue;
        if (param == "intercept" && n.dist != NodeDist::Bernoulli) {
            n.intercept = value;
            return;
        }
        if (param == "prob" && n.dist == NodeDist::Bernoulli) {
            n.prob = value;
            return;
        }
        if (param == "sd" && n.dist == NodeDist::Normal) {
            n.sd = value;
            return;
        }
        for (auto& t : n.terms) {
            if (t.parent == param) {
                t.coef = value;
                return;
            }
        }
    }
    throw InvalidInput("unknown coefficient " + key);
}

std::string ScenarioSpec::coefficient_table() const {
    std::ostringstream os;
    for (const auto& n : nodes) {
        switch (n.dist) {
            case NodeDist::Bernoulli: os << n.name << " prob " << format_double(n.prob) << '\n'; break;
            case NodeDist::Logistic:
                os << n.name << " intercept " << format_double(n.intercept) << '\n';
                break;
            case NodeDist::Normal:
                os << n.name << " intercept " << format_double(n.intercept) << '\n';
                os << n.name << " sd " << format_double(n.sd) << '\n';
                break;
        }
        for (const auto& t : n.terms) os << n.name << ' ' << t.parent << ' ' << format_double(t.coef) << '\n';
    }
    return os.str();
}

LongitudinalDataset simulate(const ScenarioSpec& spec, RandomStream& stream) {
    const Program prog = compile(spec);
    LongitudinalDataset d(prog.visits, prog.p, prog.latent_per_visit);
    std::vector<double> v(prog.nodes.size());
    std::vector<int> xs(prog.visits * prog.p), as(prog.visits);
    std::vector<double> us;
    for (std::size_t i = 0; i < spec.n; ++i) {
        for (std::size_t k = 0; k < prog.nodes.size(); ++k) {
            v[k] = draw_node(prog, k, v, stream, nullptr, true);
        }
        us.clear();
        for (std::size_t j = 0; j < prog.visits; ++j) {
            as[j] = static_cast<int>(v[prog.treat_node[j]]);
            for (std::size_t s = 0; s < prog.p; ++s) {
                xs[j * prog.p + s] = static_cast<int>(v[prog.covariate_node[j][s]]);
            }
            for (auto k : prog.latent_node[j]) us.push_back(v[k]);
        }
        d.add_subject(xs, as, v[prog.outcome], us);
    }
    return d;
}

double true_apo(const ScenarioSpec& spec, const TreatmentRegime& r) {
    const Program prog = compile(spec);
    const auto reg = regime_vector(r, prog.visits);
    std::vector<double> v(prog.nodes.size());
    return expect_from(prog, 0, v, reg.data());
}

OracleResult true_ate(const ScenarioSpec& spec, const TreatmentRegime& r1, const TreatmentRegime& r0,
                      OracleMode mode, std::uint64_t mc_draws, RandomStream* stream) {
    const Program prog = compile(spec);
    const auto reg1 = regime_vector(r1, prog.visits);
    const auto reg0 = regime_vector(r0, prog.visits);
    OracleResult res;
    res.method = mode;
    if (mode == OracleMode::ExactEnumeration) {
        if (!spec.all_binary()) {
            throw InvalidInput("exact enumeration requested for a scenario with a Normal confounder");
        }
        std::vector<double> v(prog.nodes.size());
        res.apo_treated = expect_from(prog, 0, v, reg1.data());
        res.apo_reference = expect_from(prog, 0, v, reg0.data());
        res.true_ate = res.apo_treated - res.apo_reference;
        return res;
    }
    if (mc_draws < 1) throw InvalidInput("Monte Carlo oracle needs mc_draws >= 1");
    if (stream == nullptr) throw InvalidInput("Monte Carlo oracle needs a random stream");
    // Common random numbers: one uniform or normal deviate per node, shared by both regimes.
    std::vector<double> noise(prog.nodes.size());
    std::vector<double> v1(prog.nodes.size()), v0(prog.nodes.size());
    double mean_diff = 0.0, m2 = 0.0, sum1 = 0.0, sum0 = 0.0;
    auto eval = [&](std::vector<double>& v, const std::vector<int>& reg) {
        for (std::size_t k = 0; k < prog.nodes.size(); ++k) {
            const auto& nd = prog.nodes[k];
            if (nd.role == NodeRole::Treatment) {
                v[k] = reg[nd.visit];
            } else if (nd.role == NodeRole::Outcome) {
                v[k] = prog.linear(k, v);
            } else if (nd.dist == NodeDist::Normal) {
                v[k] = prog.linear(k, v) + nd.sd * noise[k];
            } else {
                v[k] = noise[k] < prog.prob1(k, v) ? 1.0 : 0.0;
            }
        }
        return v[prog.outcome];
    };
    for (std::uint64_t d = 0; d < mc_draws; ++d) {
        for (std::size_t k = 0; k < prog.nodes.size(); ++k) {
            const auto& nd = prog.nodes[k];
            if (nd.role == NodeRole::Treatment || nd.role == NodeRole::Outcome) continue;
            noise[k] = nd.dist == NodeDist::Normal ? stream->normal() : stream->uniform();
        }
        const double y1 = eval(v1, reg1);
        const double y0 = eval(v0, reg0);
        sum1 += y1;
        sum0 += y0;
        const double diff = y1 - y0;
        const double delta = diff - mean_diff;
        mean_diff += delta / static_cast<double>(d + 1);
        m2 += delta * (diff - mean_diff);
    }
    const auto nd = static_cast<double>(mc_draws);
    res.apo_treated = sum1 / nd;
    res.apo_reference = sum0 / nd;
    res.true_ate = mean_diff;
    res.mc_draws = mc_draws;
    res.mc_standard_error = mc_draws > 1 ? std::sqrt(m2 / (nd - 1.0) / nd) : 0.0;
    return res;
}

const SensitivityCell& SensitivityTable::at(const SensitivityKey& key) const {
    auto it = cells.find(key);
    if (it == cells.end()) {
        throw UnavailableCell("sensitivity table has no cell j=" + std::to_string(key.j) +
                              " a=" + key.a_bar + " x=" + key.x_bar);
    }
    if (!it->second.available) {
        throw UnavailableCell("sensitivity cell j=" + std::to_string(key.j) + " a=" + key.a_bar +
                              " x=" + key.x_bar + " has no probability mass");
    }
    return it->second;
}

std::string SensitivityTable::to_csv() const {
    std::ostringstream os;
    os << "j,a_bar,x_bar,c,p_treat,mass,mc_se,available\n";
    for (const auto& [k, cell] : cells) {
        os << k.j << ',' << k.a_bar << ',' << k.x_bar << ',' << format_double(cell.c) << ','
           << format_double(cell.p_treat) << ',' << format_double(cell.mass) << ','
           << format_double(cell.mc_standard_error) << ',' << (cell.available ? 1 : 0) << '\n';
    }
    return os.str();
}

SensitivityTable SensitivityTable::from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("j,a_bar,x_bar,c,p_treat", 0) != 0) {
        throw InvalidInput("sensitivity table CSV: unexpected header");
    }
    SensitivityTable t;
    t.method = OracleMode::ExactEnumeration;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 8) throw InvalidInput("sensitivity table CSV: expected 8 fields: " + line);
        SensitivityKey key{static_cast<std::size_t>(std::stoul(f[0])), f[1], f[2]};
        SensitivityCell c;
        c.c = std::stod(f[3]);
        c.p_treat = std::stod(f[4]);
        c.mass = std::stod(f[5]);
        c.mc_standard_error = std::stod(f[6]);
        c.available = f[7] == "1";
        if (c.mc_standard_error > 0) t.method = OracleMode::MonteCarlo;
        t.visits = key.a_bar.size();
        if (key.j == 0 || key.x_bar.size() % key.j != 0) {
            throw InvalidInput("sensitivity table CSV: x_bar length is not a multiple of j");
        }
        t.covariates_per_visit = key.x_bar.size() / key.j;
        t.cells[key] = c;
    }
    return t;
}

namespace {

struct CellAccumulator {
    // Indexed by the treatment actually taken at visit j.
    double num[2] = {0, 0};
    double den[2] = {0, 0};
    double sq[2] = {0, 0};
    std::uint64_t count[2] = {0, 0};
};

struct HistoryAccumulator {
    double mass = 0.0;
    double treated = 0.0;
};

struct TableBuilder {
    const Program& prog;
    std::map<SensitivityKey, CellAccumulator> cells;
    std::map<std::pair<std::size_t, std::string>, HistoryAccumulator> hist;  // (j, a_prev + "|" + x_bar)

    std::string x_bits(const std::vector<double>& v, std::size_t upto_visit) const {
        std::string s;
        for (std::size_t j = 0; j <= upto_visit; ++j) {
            for (auto k : prog.covariate_node[j]) s.push_back(v[k] > 0.5 ? '1' : '0');
        }
        return s;
    }
    std::string a_bits(const std::vector<double>& v, std::size_t before_visit) const {
        std::string s;
        for (std::size_t j = 0; j < before_visit; ++j) s.push_back(v[prog.treat_node[j]] > 0.5 ? '1' : '0');
        return s;
    }
    // Regimes sharing the observed prefix a_bar_{j-1}; visit j and later are free.
    std::vector<std::vector<int>> compatible(const std::string& prefix) const {
        const std::size_t free = prog.visits - prefix.size();
        std::vector<std::vector<int>> out;
        for (std::size_t m = 0; m < (std::size_t{1} << free); ++m) {
            std::vector<int> r;
            for (char c : prefix) r.push_back(c - '0');
            for (std::size_t b = free; b-- > 0;) r.push_back(static_cast<int>((m >> b) & 1U));
            out.push_back(std::move(r));
        }
        return out;
    }

    SensitivityTable finish(OracleMode mode, std::uint64_t draws) const {
        SensitivityTable t;
        t.visits = prog.visits;
        t.covariates_per_visit = prog.p;
        t.method = mode;
        for (const auto& [key, acc] : cells) {
            SensitivityCell cell;
            const int aj = key.a_bar[key.j - 1] - '0';
            const auto& h = hist.at({key.j, key.a_bar.substr(0, key.j - 1) + "|" + key.x_bar});
            cell.mass = mode == OracleMode::MonteCarlo ? h.mass / static_cast<double>(draws) : h.mass;
            cell.p_treat = h.mass > 0 ? h.treated / h.mass : 0.0;
            const bool ok = mode == OracleMode::ExactEnumeration
                                ? acc.den[aj] > 0 && acc.den[1 - aj] > 0
                                : acc.count[aj] >= 2 && acc.count[1 - aj] >= 2;
            cell.available = ok;
            if (ok) {
                const double m1 = acc.num[aj] / acc.den[aj];
                const double m0 = acc.num[1 - aj] / acc.den[1 - aj];
                cell.c = m1 - m0;
                if (mode == OracleMode::MonteCarlo) {
                    auto var = [&](int t) {
                        const double n = static_cast<double>(acc.count[t]);
                        const double m = acc.num[t] / n;
                        return std::max(0.0, (acc.sq[t] / n - m * m) * n / (n - 1.0)) / n;
                    };
                    cell.mc_standard_error = std::sqrt(var(aj) + var(1 - aj));
                }
            }
            t.cells[key] = cell;
        }
        return t;
    }

    void enumerate(std::size_t k, std::vector<double>& v, double prob) {
        const auto& nd = prog.nodes[k];
        if (nd.role == NodeRole::Outcome) return;
        if (nd.role == NodeRole::Treatment) {
            const std::size_t j = nd.visit;
            const std::string prefix = a_bits(v, j);
            const std::string xb = x_bits(v, j);
            const double p1 = prog.prob1(k, v);
            auto& h = hist[{j + 1, prefix + "|" + xb}];
            h.mass += prob;
            h.treated += prob * p1;
            std::vector<double> scratch;
            for (const auto& reg : compatible(prefix)) {
                scratch = v;
                const double g = expect_from(prog, k, scratch, reg.data());
                auto& acc = cells[{j + 1, bits_of(reg), xb}];
                acc.num[1] += prob * p1 * g;
                acc.den[1] += prob * p1;
                acc.num[0] += prob * (1 - p1) * g;
                acc.den[0] += prob * (1 - p1);
            }
            v[k] = 1.0;
            enumerate(k + 1, v, prob * p1);
            v[k] = 0.0;
            enumerate(k + 1, v, prob * (1 - p1));
            return;
        }
        const double p1 = prog.prob1(k, v);
        v[k] = 1.0;
        enumerate(k + 1, v, prob * p1);
        v[k] = 0.0;
        enumerate(k + 1, v, prob * (1 - p1));
    }

    void sample_path(std::vector<double>& v, RandomStream& rs) {
        std::vector<double> scratch;
        for (std::size_t k = 0; k < prog.nodes.size(); ++k) {
            const auto& nd = prog.nodes[k];
            if (nd.role == NodeRole::Outcome) break;
            if (nd.role != NodeRole::Treatment) {
                v[k] = draw_node(prog, k, v, rs, nullptr, false);
                continue;
            }
            const std::size_t j = nd.visit;
            const std::string prefix = a_bits(v, j);
            const std::string xb = x_bits(v, j);
            const int took = rs.uniform() < prog.prob1(k, v) ? 1 : 0;
            auto& h = hist[{j + 1, prefix + "|" + xb}];
            h.mass += 1.0;
            h.treated += took;
            for (const auto& reg : compatible(prefix)) {
                scratch = v;
                const double g = sample_from(prog, k, scratch, reg.data(), rs);
                auto& acc = cells[{j + 1, bits_of(reg), xb}];
                acc.num[took] += g;
                acc.sq[took] += g * g;
                acc.den[took] += 1.0;
                acc.count[took] += 1;
            }
            v[k] = took;
        }
    }
};

}  // namespace

SensitivityTable true_sensitivity_table(const ScenarioSpec& spec, OracleMode mode,
                                        std::uint64_t mc_draws, RandomStream* stream) {
    const Program prog = compile(spec);
    TableBuilder b{prog, {}, {}};
    std::vector<double> v(prog.nodes.size());
    if (mode == OracleMode::ExactEnumeration) {
        if (!spec.all_binary()) {
            throw InvalidInput("exact enumeration requested for a scenario with a Normal confounder");
        }
        b.enumerate(0, v, 1.0);
        return b.finish(mode, 0);
    }
    if (mc_draws < 1) throw InvalidInput("Monte Carlo oracle needs mc_draws >= 1");
    if (stream == nullptr) throw InvalidInput("Monte Carlo oracle needs a random stream");
    for (std::uint64_t d = 0; d < mc_draws; ++d) b.sample_path(v, *stream);
    return b.finish(mode, mc_draws);
}

}  // namespace longconf
