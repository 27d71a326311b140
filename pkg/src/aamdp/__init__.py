"""Ambiguity-averse MDP solvers: risk measures, Bellman operators, solvers and evaluators."""
