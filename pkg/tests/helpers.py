"""Shared builders for tests."""

from __future__ import annotations

from intentdefense.intent import Alert, Observation


def scenario_observation(scenario, techniques=None, round_index=1) -> Observation:
    """Alerts exactly as the detector would emit them for ``techniques``."""
    alerts = []
    for rule in scenario.detector.rules:
        if techniques is not None and rule.technique_id not in techniques:
            continue
        alert_id = f"al-{round_index}-{len(alerts)}"
        meta = dict(rule.metadata, id=alert_id, timestamp=str(round_index))
        alerts.append(Alert.create(alert_id, rule.technique_id, meta))
    return Observation(tuple(alerts))


def scenario_intents(scenario):
    """Candidate intents for a full-detection observation, keyed by defensive technique."""
    from intentdefense.intent import derive_candidates

    cands = derive_candidates(scenario_observation(scenario), scenario.kb, scenario.mapper_rules,
                              scenario.exclusion_list)
    return {i.dt: i for i in sorted(cands)}
