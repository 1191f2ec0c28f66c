"""An untyped probabilistic lambda calculus with splittable entropy:
evaluators, Monte-Carlo program measures, and measure-preserving rewrites."""

__version__ = "0.1.0"
