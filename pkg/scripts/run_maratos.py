#!/usr/bin/env python3
"""Print the Maratos-Fletcher iteration traces for both inner mechanisms.

The trust-region run shows the radius collapsing on the curved constraint
before curvature information kicks in; the line-search run shows the
regularized Hessian taking over after two halved steps.
"""

from funnel_sqp import SolverConfig, format_trace, get_problem, solve


def main():
    problem = get_problem("maratos-fletcher")
    for mechanism in ("trust-region", "line-search"):
        config = SolverConfig(strategy="funnel", mechanism=mechanism)
        result = solve(problem, config)
        print(f"== funnel + {mechanism} ==")
        print(format_trace(result))
        print(f"status: {result.status}   outer: {result.n_outer}   "
              f"x: {result.x}   lam: {result.lam}")
        print()


if __name__ == "__main__":
    main()
