use divider::train::{train, Algorithm, TrainConfig};

fn tiny(algorithm: Algorithm) -> TrainConfig {
    let mut config = match algorithm {
        Algorithm::Ddpg => TrainConfig::ddpg(11),
        Algorithm::Ppo => TrainConfig::ppo(11),
    };
    config.episodes = 5;
    config.steps_per_episode = 60;
    config.hidden_layers = vec![8, 8];
    config.critic_hidden = vec![16];
    config.warmup_steps = 100;
    config.rollout_batch = 120;
    config
}

#[test]
fn same_seed_gives_identical_weight_files() {
    let dir = tempfile::tempdir().unwrap();
    for algorithm in [Algorithm::Ddpg, Algorithm::Ppo] {
        let config = tiny(algorithm);
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let first = train(&config).unwrap();
        first.actor.save(&a).unwrap();
        let second = train(&config).unwrap();
        second.actor.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(first.curve, second.curve);
    }
}

#[test]
fn different_seeds_differ() {
    let config = tiny(Algorithm::Ppo);
    let other = TrainConfig { seed: 12, ..config.clone() };
    assert_ne!(train(&config).unwrap().actor, train(&other).unwrap().actor);
}

#[test]
fn general_actor_trains() {
    let mut config = tiny(Algorithm::Ddpg);
    config.simplified = false;
    config.activation = divider::net::Activation::Relu;
    let outcome = train(&config).unwrap();
    assert!(!outcome.actor.is_simplified());
    assert_eq!(outcome.curve.len(), 5);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            TrainConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 3);
}
