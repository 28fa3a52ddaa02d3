#include "grad_suite.hpp"

#include <functional>
#include <memory>
#include <random>

#include "casdet/gru.hpp"
#include "casdet/layers.hpp"
#include "casdet/optim.hpp"
#include "gradcheck.hpp"

namespace casdet::testing {
namespace {

enum class Domain { kImage, kSequence, kAny };

struct Built {
  LayerPtr layer;
  std::vector<Dropout*> dropouts;
};

// A layer factory maps an input shape to a layer accepting it.
struct LayerKind {
  std::string name;
  Domain in;
  Domain out;
  std::function<Built(const Shape&, std::mt19937_64&)> make;
};

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<LayerKind> kinds() {
  std::vector<LayerKind> k;
  k.push_back({"Conv2D", Domain::kImage, Domain::kImage, [](const Shape& s, std::mt19937_64& rng) {
                 Conv2DSpec spec{pick(rng, 1, 4), pick(rng, 1, 4), s[1], pick(rng, 1, 3)};
                 auto c = std::make_unique<Conv2D>("conv", spec, rng);
                 for (double& b : c->bias().value.values()) b = uniform_symmetric(rng, 0.5);
                 return Built{std::move(c), {}};
               }});
  k.push_back({"BatchNorm", Domain::kImage, Domain::kImage, [](const Shape& s, std::mt19937_64& rng) {
                 auto b = std::make_unique<BatchNorm>("bn", BatchNormSpec{s[1]});
                 for (double& g : b->gamma().value.values()) g = 0.5 + uniform01(rng);
                 for (double& v : b->beta().value.values()) v = uniform_symmetric(rng, 0.5);
                 return Built{std::move(b), {}};
               }});
  k.push_back({"ReLU", Domain::kAny, Domain::kAny,
               [](const Shape&, std::mt19937_64&) { return Built{std::make_unique<ReLU>("relu"), {}}; }});
  k.push_back({"MaxPool2D", Domain::kImage, Domain::kImage, [](const Shape&, std::mt19937_64& rng) {
                 return Built{std::make_unique<MaxPool2D>("pool", rng() % 2 == 0), {}};
               }});
  k.push_back({"Dropout", Domain::kAny, Domain::kAny, [](const Shape&, std::mt19937_64& rng) {
                 auto d = std::make_unique<Dropout>("drop", 0.1 + 0.4 * uniform01(rng), rng());
                 Dropout* raw = d.get();
                 return Built{std::move(d), {raw}};
               }});
  k.push_back({"ResidualBlock", Domain::kImage, Domain::kImage, [](const Shape& s, std::mt19937_64& rng) {
                 // Cycles through projection, identity and broadcast shortcuts.
                 const std::size_t mode = pick(rng, 0, 2);
                 ResidualSpec spec{s[1], s[1], true};
                 if (mode == 0) spec.out_channels = s[1] + pick(rng, 1, 2);
                 if (mode == 2 && s[1] == 1) {
                   spec.out_channels = pick(rng, 2, 3);
                   spec.projection = false;
                 }
                 auto r = std::make_unique<ResidualBlock>("res", spec, rng);
                 for (Parameter* p : r->parameters()) {
                   if (p->name.ends_with("/bias")) {
                     for (double& b : p->value.values()) b = uniform_symmetric(rng, 0.5);
                   }
                 }
                 return Built{std::move(r), {}};
               }});
  k.push_back({"FlattenPerTimestep", Domain::kImage, Domain::kSequence, [](const Shape&, std::mt19937_64&) {
                 return Built{std::make_unique<FlattenPerTimestep>("flat"), {}};
               }});
  k.push_back({"Dense", Domain::kSequence, Domain::kSequence, [](const Shape& s, std::mt19937_64& rng) {
                 auto d = std::make_unique<Dense>("dense", DenseSpec{s[2], pick(rng, 1, 4)}, rng);
                 for (double& b : d->bias().value.values()) b = uniform_symmetric(rng, 0.5);
                 return Built{std::move(d), {}};
               }});
  k.push_back({"Sigmoid", Domain::kAny, Domain::kAny,
               [](const Shape&, std::mt19937_64&) { return Built{std::make_unique<Sigmoid>("sig"), {}}; }});
  k.push_back({"BiGRU", Domain::kSequence, Domain::kSequence, [](const Shape& s, std::mt19937_64& rng) {
                 auto g = std::make_unique<BiGRU>("gru", BiGruSpec{s[2], pick(rng, 1, 3)}, rng);
                 for (Parameter* p : g->parameters()) {
                   if (p->name.find("bias") != std::string::npos) {
                     for (double& b : p->value.values()) b = uniform_symmetric(rng, 0.3);
                   }
                 }
                 return Built{std::move(g), {}};
               }});
  return k;
}

bool accepts(Domain in, Domain produced) { return in == Domain::kAny || in == produced; }

Shape random_input(Domain d, std::mt19937_64& rng) {
  if (d == Domain::kSequence) return {pick(rng, 1, 2), pick(rng, 1, 5), pick(rng, 1, 4)};
  return {pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 7), pick(rng, 4, 7)};
}

Domain output_domain(const LayerKind& k, Domain in) { return k.out == Domain::kAny ? in : k.out; }

std::vector<Domain> input_domains(const LayerKind& k) {
  if (k.in == Domain::kAny) return {Domain::kImage, Domain::kSequence};
  return {k.in};
}

// Start domains for which every layer of the chain accepts its input.
std::vector<Domain> valid_starts(const std::vector<const LayerKind*>& chain) {
  std::vector<Domain> out;
  for (Domain d : input_domains(*chain.front())) {
    Domain cur = d;
    bool ok = true;
    for (const LayerKind* k : chain) {
      if (!accepts(k->in, cur)) ok = false;
      cur = output_domain(*k, cur);
    }
    if (ok) out.push_back(d);
  }
  return out;
}

GradSuiteRow run_case(const std::vector<const LayerKind*>& chain, const std::vector<Domain>& starts,
                      std::size_t shapes, std::mt19937_64& rng) {
  GradSuiteRow row;
  for (std::size_t i = 0; i < chain.size(); ++i) row.name += (i ? ">" : "") + chain[i]->name;
  row.shapes = shapes;
  for (std::size_t s = 0; s < shapes; ++s) {
    for (int attempt = 0;; ++attempt) {
      const Shape in = random_input(starts[s % starts.size()], rng);
      auto seq = std::make_unique<Sequential>("chain");
      std::vector<Dropout*> dropouts;
      Shape cur = in;
      for (const LayerKind* k : chain) {
        Built b = k->make(cur, rng);
        cur = b.layer->output_shape(cur);
        dropouts.insert(dropouts.end(), b.dropouts.begin(), b.dropouts.end());
        seq->add(std::move(b.layer));
      }
      const Tensor x = random_tensor(in, rng);
      const std::uint64_t mask_seed = rng();
      auto reseed = [&] {
        for (std::size_t i = 0; i < dropouts.size(); ++i) dropouts[i]->reseed(mask_seed + i);
      };
      const GradCheckResult r = grad_check(*seq, x, rng, reseed);
      if (!r.smooth && attempt < 10) {
        ++row.redraws;
        continue;
      }
      if (r.max_rel_error > row.max_rel_error || row.worst.empty()) {
        row.max_rel_error = r.max_rel_error;
        row.worst = to_string(in) + ": " + r.worst;
      }
      break;
    }
  }
  return row;
}

}  // namespace

std::vector<GradSuiteRow> run_gradient_suite(std::size_t shapes_per_case, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto all = kinds();
  std::vector<GradSuiteRow> rows;
  for (const auto& k : all) rows.push_back(run_case({&k}, valid_starts({&k}), shapes_per_case, rng));
  for (const auto& a : all) {
    for (const auto& b : all) {
      const std::vector<const LayerKind*> chain{&a, &b};
      const auto starts = valid_starts(chain);
      if (!starts.empty()) rows.push_back(run_case(chain, starts, shapes_per_case, rng));
    }
  }
  return rows;
}

double bce_gradient_error(std::size_t cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    const Shape s{pick(rng, 1, 3), pick(rng, 1, 20)};
    Tensor p(s), t(s);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = 0.02 + 0.96 * uniform01(rng);
      t[i] = static_cast<double>(rng() % 2);
    }
    const LossResult base = bce_loss(p, t);
    std::vector<double> num(p.size());
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i) {
      Tensor up = p, down = p;
      up[i] += h;
      down[i] -= h;
      num[i] = (bce_loss(up, t).loss - bce_loss(down, t).loss) / (2 * h);
    }
    worst = std::max(worst, relative_error(base.gradient.to_vector(), num));
  }
  return worst;
}

}  // namespace casdet::testing
