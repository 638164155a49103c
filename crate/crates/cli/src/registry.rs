//! Built-in scenario registry.

const SCENARIOS: &[(&str, &str)] = &[
    ("fig2-linear", include_str!("../scenarios/fig2-linear.json")),
    ("fig2-nonlinear", include_str!("../scenarios/fig2-nonlinear.json")),
    (
        "fig2-action-parents",
        include_str!("../scenarios/fig2-action-parents.json"),
    ),
    ("trainsize-sweep", include_str!("../scenarios/trainsize-sweep.json")),
    ("star", include_str!("../scenarios/star.json")),
    ("irm-b1", include_str!("../scenarios/irm-b1.json")),
    ("strict-b2", include_str!("../scenarios/strict-b2.json")),
    ("asm-a2-sweep", include_str!("../scenarios/asm-a2-sweep.json")),
    ("sc-learning", include_str!("../scenarios/sc-learning.json")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|(n, _)| *n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_parses_and_builds() {
        for name in names() {
            let text = builtin(name).unwrap();
            let spec = crate::scenario::parse_scenario_text(text, &[])
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            crate::scenario::build_scenario(spec).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
