"""Discrete-round environment: infrastructure, scripted attacker, detector, episodes.

Submodules are imported explicitly (``simulation.env``, ``simulation.scenario``...)
because the enforcement layer depends on :mod:`.infrastructure`.
"""
