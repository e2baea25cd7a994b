"""
Wasserstein-space checks

This package contains the numerical engines and the experiment harness:

  - measure:            finitely supported probability measures, products, marginals
  - transport:          exact W2 optimal transport (network simplex), potentials,
        cyclical monotonicity, glueing, plan stability
  - geodesy:            displacement interpolation and generalized geodesics
  - functionals:        potential / interaction / W2-to-target / grid entropy energies,
        proximal maps, convexity and lower-semicontinuity checks
  - convergence:        narrow and strong-weak convergence diagnostics, Opial residuals,
        limit-set probes, test sequence constructions
  - schemes:            JKO steps and runs, EVI particle flows, fixed-point iteration
  - experiment_config:  JSON experiment configs and their validation
  - experiment_runner:  runs one config and writes trace / manifest / verdict files
  - suite_executor:     runs a directory of configs concurrently
  - report_writer, report_console: artifact files and the ANSI console summary
"""
