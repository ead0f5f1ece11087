"""Intent-based autonomic cyber defense.

Subpackages and modules:

- :mod:`.ontology`: knowledge base of offensive/defensive techniques and artifacts.
- :mod:`.intent`: security intents and candidate derivation from alerts.
- :mod:`.decision`: intent store, POMDP belief tracking, planners, Q-learning.
- :mod:`.enforcement`: security-function registry, enforcement and assurance.
- :mod:`.simulation`: scenario loader, scripted attacker, detector, episodes.
- :mod:`.cli`: command-line interface.
"""

__version__ = "0.1.0"
