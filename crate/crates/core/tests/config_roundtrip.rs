use nondiff_rl::harness::RunConfig;
use proptest::prelude::*;

proptest! {
    #[test]
    fn serialize_parse_round_trip(
        seed in any::<u64>(),
        gamma in 0.0f64..=1.0,
        clip in 1e-6f64..1.0,
        lr in 1e-9f64..1.0,
        hidden in proptest::collection::vec(1usize..512, 1..4),
        cells in proptest::collection::vec((0usize..4, 0usize..4), 0..5),
        algo in 0usize..6,
        auto in any::<bool>(),
        target in -5.0f64..5.0,
    ) {
        let mut c = RunConfig::default();
        c.seed = seed;
        c.gamma = gamma;
        c.ppo.clip = clip;
        c.sac.actor_lr = lr;
        c.qlearn.hidden = hidden.clone();
        c.env.obstacles = cells;
        c.algorithm = nondiff_rl::harness::Algorithm::NAMES[algo].parse().unwrap();
        c.sac.target_entropy = if auto { None } else { Some(target) };
        let text = c.serialize();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.serialize(), text);
    }

    #[test]
    fn out_of_unit_gamma_always_rejected(g in prop_oneof![-1e6f64..-1e-12, 1.0f64 + 1e-12..1e6]) {
        let err = RunConfig::parse(&format!("gamma = {g}")).unwrap_err().to_string();
        prop_assert!(err.contains("gamma"));
    }
}

#[test]
fn every_key_is_serialized_once() {
    let text = RunConfig::default().serialize();
    let keys = RunConfig::keys();
    assert_eq!(text.lines().count(), keys.len());
    for (line, key) in text.lines().zip(&keys) {
        assert!(line.starts_with(&format!("{key} = ")), "{line}");
    }
}
