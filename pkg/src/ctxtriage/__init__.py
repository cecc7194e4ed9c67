"""Context-selection assistance for intrusion-alert triage.

Simulated analysts learn by reinforcement which grouped context features to
request when classifying alerts; an assistant policy imitates them and is
teamed back with the analysts under several suggestion-adoption strategies,
with Shapley-based explanations and nonparametric evaluation throughout.
"""

__version__ = "0.1.0"
