// Generates one synthetic ring image, computes its superlevel cubical
// persistence diagram and prints the points.

#include <iostream>

#include "topojscc/cubical.hpp"
#include "topojscc/io.hpp"

int main() {
  using namespace topojscc;
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::kRings;
  spec.count = 1;
  spec.h = 32;
  spec.w = 32;
  spec.seed = 3;
  const Dataset d = gen_synthetic(spec);
  const PersistenceDiagram dgm = cubical_diagram(d.images[0], 1);
  write_diagram_csv(std::cout, dgm);
  const auto [b0, b1] = betti_at(dgm, 0.5);
  std::cout << "# betti at 0.5: " << b0 << " " << b1 << "\n";
  return 0;
}
