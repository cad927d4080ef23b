"""OVNNI: fusing one-vs-all binary classifiers with an all-vs-all classifier
to score epistemic uncertainty, plus baseline methods, evaluation metrics and
an experiment harness."""

__version__ = "0.1.0"
