"""actlab: a desk-scale laboratory for activation functions.

Search for activation functions with an evolutionary loop over a small
FLOP-budgeted DSL, score candidates by out-of-distribution test error of
tiny MLPs trained on synthetic regression tasks, and compare against a
reference zoo of studied functions.  See the README for the CLI surface.
"""

__version__ = "0.1.0"
