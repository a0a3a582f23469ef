use divider::division::{self, Direction};
use divider::env::{rollout, RolloutOptions};
use divider::net::{Activation, PolicyNet};
use divider::oracle::{bang_bang_action, ideal_decel_point, optimal_time, BangBang, SwitchingCurve};
use divider::State;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simplified_net(seed: u64, widths: &[usize]) -> PolicyNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PolicyNet::random(widths, Activation::Tanh, true, 5.0, &mut rng)
}

fn general_net(seed: u64) -> PolicyNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PolicyNet::random(&[8, 8], Activation::Relu, false, 5.0, &mut rng)
}

fn widths() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..12, 1..4)
}

fn state(bound: f64) -> impl Strategy<Value = State> {
    (-bound..bound, -bound..bound).prop_map(|(p, v)| State::new(p, v))
}

/// Largest relative gap between analytic and central-difference input derivatives.
fn input_gradient_error(net: &PolicyNet, s: State) -> f64 {
    let g = net.gradient(s).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..2 {
        let (dp, dv) = if k == 0 { (h, 0.0) } else { (0.0, h) };
        let up = net.output(State::new(s.p + dp, s.v + dv)).unwrap();
        let down = net.output(State::new(s.p - dp, s.v - dv)).unwrap();
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((g.input[k] - fd).abs() / fd.abs().max(g.input[k].abs()).max(1e-3));
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplified_nets_are_odd(seed in any::<u64>(), w in widths(), s in state(50.0)) {
        let net = simplified_net(seed, &w);
        let a = net.forward(s).unwrap();
        let b = net.forward(-s).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn actions_stay_bounded(seed in any::<u64>(), s in state(1e6)) {
        for net in [simplified_net(seed, &[8, 8]), general_net(seed)] {
            prop_assert!(net.forward(s).unwrap().abs() <= net.action_bound());
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences(seed in any::<u64>(), w in widths(), s in state(3.0)) {
        let net = simplified_net(seed, &w);
        prop_assert!(input_gradient_error(&net, s) < 1e-4);
    }

    #[test]
    fn weight_gradient_matches_finite_differences(seed in any::<u64>(), s in state(3.0), layer in 0usize..3) {
        let net = general_net(seed);
        let g = net.gradient(s).unwrap();
        let mut text: serde_json::Value = serde_json::from_str(&net.to_text()).unwrap();
        let h = 1e-6;
        let perturbed = |text: &mut serde_json::Value, delta: f64| {
            let w = &mut text["layers"][layer]["weights"][0];
            *w = serde_json::json!(w.as_f64().unwrap() + delta);
            PolicyNet::from_text(&text.to_string()).unwrap().output(s).unwrap()
        };
        let up = perturbed(&mut text, h);
        let down = perturbed(&mut text, -2.0 * h);
        let fd = (up - down) / (2.0 * h);
        let analytic = g.params.layers[layer].weights[[0, 0]];
        prop_assert!((analytic - fd).abs() <= 1e-4 * fd.abs().max(analytic.abs()).max(1e-2),
            "{analytic} vs {fd}");
    }

    #[test]
    fn neighbouring_regions_differ_in_one_neuron(seed in any::<u64>()) {
        let net = simplified_net(seed, &[6, 4]);
        prop_assume!(division::division_directions(&net).unwrap().parallel_pairs.is_empty());
        let regions = division::regions(&net).unwrap();
        prop_assert_eq!(regions.len(), 12);
        for k in 0..regions.len() {
            let a = &regions[k].phi;
            let b = &regions[(k + 1) % regions.len()].phi;
            prop_assert_eq!(a.iter().zip(b).filter(|(x, y)| x != y).count(), 1);
        }
    }

    #[test]
    fn strip_formula_holds_far_out(seed in any::<u64>(), i in 0usize..8, x in -2.0f64..2.0) {
        let net = simplified_net(seed, &[8, 8]);
        prop_assume!(division::division_directions(&net).unwrap().parallel_pairs.is_empty());
        prop_assert!(division::strip_formula_check(&net, i, x, 1e6).unwrap() < 1e-3);
    }

    #[test]
    fn saturated_output_converges_to_region_value(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU) {
        let net = simplified_net(seed, &[8, 8]);
        let d = Direction::from_angle(theta);
        let Ok(limit) = division::phi_bar(&net, d) else { return Ok(()); };
        let min_dot = net.first_layer().outer_iter().map(|w| d.dot([w[0], w[1]]).abs()).fold(f64::INFINITY, f64::min);
        prop_assume!(min_dot > 1e-3);
        let mu = net.output(d.at(1e5 / min_dot)).unwrap();
        prop_assert!((mu - limit).abs() < 1e-6);
    }

    #[test]
    fn bang_bang_pushes_toward_the_curve(s in state(30.0)) {
        let curve = SwitchingCurve::new(5.0);
        let a = bang_bang_action(s, 5.0);
        prop_assert!(a.abs() == 5.0 || s == State::ORIGIN);
        let r = curve.residual(s);
        if r.abs() > 1e-6 {
            prop_assert_eq!(a, -5.0 * r.signum());
        }
    }

    #[test]
    fn ideal_switch_point_lies_on_the_curve(p0 in -50.0f64..50.0, v0 in -10.0f64..10.0) {
        let s0 = State::new(p0, v0);
        prop_assume!(s0.norm() > 1e-3);
        let switch = ideal_decel_point(s0, 5.0);
        prop_assert!(SwitchingCurve::new(5.0).residual(switch).abs() < 1e-6 * (1.0 + s0.norm().powi(2)));
        prop_assert!(optimal_time(s0, 5.0) > 0.0);
    }

    #[test]
    fn oracle_overshoot_does_not_grow_with_distance(p0 in 1.0f64..60.0) {
        let opts = RolloutOptions::default().with_dt(1e-3).with_horizon(20.0);
        for start in [-p0, p0] {
            let traj = rollout(&BangBang::new(5.0), State::new(start, 0.0), &opts).unwrap();
            prop_assert!(traj.metrics(5.0).overshoot < 0.05);
        }
    }

    #[test]
    fn oracle_overshoot_is_integration_scale(p0 in -30.0f64..30.0, v0 in 0.0f64..10.0) {
        // Moving away from the target, so the continuous-time optimum never overshoots.
        let s0 = State::new(p0, v0 * p0.signum());
        prop_assume!(p0.abs() > 0.5);
        let dt = 1e-3;
        let opts = RolloutOptions::default().with_dt(dt).with_horizon(30.0);
        let traj = rollout(&BangBang::new(5.0), s0, &opts).unwrap();
        let v_peak = traj.samples.iter().map(|s| s.state.v.abs()).fold(0.0, f64::max);
        prop_assert!(traj.metrics(5.0).overshoot < 10.0 * dt * v_peak);
    }
}

#[test]
fn sign_raster_of_constructed_net_follows_the_dominant_line() {
    use divider::raster::{rasterize, RasterMode, RasterSpec};
    let net = divider::net::constructed_example();
    let spec = RasterSpec {
        p_range: (-100.0, 100.0),
        v_range: (-100.0, 100.0),
        resolution: 256,
        mode: RasterMode::Sign,
    };
    let raster = rasterize(&net, spec, net.action_bound()).unwrap();
    assert!(raster.has_spanning_boundary());
    // Line spanned by the perpendicular of the first row.
    let d = division::division_directions(&net).unwrap().lines[0].direction;
    let px = 200.0 / 256.0;
    let far: Vec<_> = raster
        .boundary_pixels()
        .into_iter()
        .filter(|&(r, c)| State::new(spec.p_at(c), spec.v_at(r)).norm() > 20.0)
        .collect();
    assert!(!far.is_empty());
    for (r, c) in far {
        let s = State::new(spec.p_at(c), spec.v_at(r));
        let distance = (s.p * d.y - s.v * d.x).abs();
        assert!(distance < 2.0 * px, "pixel ({r}, {c}) is {distance} from the line");
    }
}
