"""Linear two-timescale stochastic approximation with sparse projections."""
