use proptest::prelude::*;
use vmcollab::components::*;
use vmcollab::Vec3;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn gaussian() -> impl Strategy<Value = GaussianSpringSpec> {
    // Both signs: attractive and repulsive springs share the profile.
    (prop_oneof![-5000.0..-10.0, 10.0..5000.0f64], 0.01..0.5f64)
        .prop_map(|(k, sigma)| GaussianSpringSpec::from_stiffness_sigma(k, sigma).unwrap())
}

proptest! {
    #[test]
    fn gaussian_peak_sits_at_sigma(spec in gaussian(), dir in vec3(1.0).prop_filter("nonzero", |v| v.norm() > 1e-3)) {
        let dir = dir.normalized().unwrap();
        let magnitude = |r: f64| gaussian_avoidance_force(Vec3::ZERO, dir * r, &spec).norm();
        let peak = spec.stiffness.abs() * spec.sigma * (-0.5f64).exp();
        prop_assert!((magnitude(spec.sigma) - peak).abs() <= 1e-9 * peak);
        // Dense sampling over (0, 6σ) never beats the value at σ.
        let mut best = (0.0, 0.0);
        for i in 1..=6000 {
            let r = spec.sigma * f64::from(i) / 1000.0;
            let m = magnitude(r);
            prop_assert!(m <= peak * (1.0 + 1e-12));
            if m > best.1 {
                best = (r, m);
            }
        }
        prop_assert!((best.0 - spec.sigma).abs() <= spec.sigma * 1e-3);
    }

    #[test]
    fn any_two_gaussian_parameters_fix_the_third(k in 10.0..5000.0f64, f in 1.0..100.0f64, sign in prop::bool::ANY) {
        let s = if sign { 1.0 } else { -1.0 };
        let a = GaussianSpringSpec::from_stiffness_max_force(s * k, s * f).unwrap();
        prop_assert!((a.sigma - a.max_force * SQRT_E / a.stiffness).abs() <= 1e-9 * a.sigma);
        let b = GaussianSpringSpec::from_sigma_max_force(a.sigma, a.max_force).unwrap();
        prop_assert!((b.stiffness - a.stiffness).abs() <= 1e-9 * a.stiffness.abs());
        let c = GaussianSpringSpec::from_stiffness_sigma(a.stiffness, a.sigma).unwrap();
        prop_assert!((c.max_force - a.max_force).abs() <= 1e-9 * a.max_force.abs());
    }

    #[test]
    fn gaussian_force_is_minus_energy_gradient(spec in gaussian(), obj in vec3(0.5), me in vec3(0.5)) {
        // Energy as a function of our own position.
        let e = |p: Vec3| spec.energy(obj - p);
        let f = gaussian_avoidance_force(me, obj, &spec);
        let h = 1e-6 * spec.sigma;
        let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
        let scale = spec.stiffness.abs() * spec.sigma;
        for (i, ax) in axes.iter().enumerate() {
            let grad = (e(me + *ax * h) - e(me - *ax * h)) / (2.0 * h);
            let fi = [f.x, f.y, f.z][i];
            prop_assert!((fi + grad).abs() <= 1e-6 * scale, "axis {i}: force {fi}, -grad {}", -grad);
        }
    }

    #[test]
    fn goal_clamp_scales_without_rotating(
        x in vec3(1.0), v in vec3(2.0), target in vec3(1.0), vt in vec3(2.0),
        k in 1.0..5000.0f64, c in 0.0..300.0f64, cap in 0.1..50.0f64,
    ) {
        let spec = GoalSpringSpec::new(k, c, cap).unwrap();
        let f = goal_spring_force(x, v, target, vt, &spec);
        let raw = (target - x) * k + (vt - v) * c;
        prop_assert!(f.norm() <= cap * (1.0 + 1e-12));
        // f = λ·raw with λ in [0, 1].
        prop_assert!(f.cross(raw).norm() <= 1e-9 * (1.0 + raw.norm() * cap));
        prop_assert!(f.dot(raw) >= 0.0);
        if raw.norm() <= cap {
            prop_assert!((f - raw).norm() <= 1e-12 * (1.0 + raw.norm()));
        }
    }

    #[test]
    fn damper_only_brakes_approach(
        ee in vec3(0.6), hand in vec3(0.6), v_ee in vec3(2.0), v_hand in vec3(2.0),
        c0 in 1.0..300.0f64, radius in 0.05..1.0f64, cap in 1.0..100.0f64,
    ) {
        let spec = UnilateralDamperSpec::new(c0, radius, cap).unwrap();
        let d = hand - ee;
        prop_assume!(d.norm() > 1e-6);
        let f = unilateral_damper_force(ee, v_ee, hand, v_hand, &spec).unwrap();
        let d_dot = v_hand - v_ee;
        prop_assert!(f.norm() <= cap * (1.0 + 1e-12));
        if d.norm() >= radius || d.dot(d_dot) >= 0.0 {
            prop_assert_eq!(f, Vec3::ZERO);
        } else {
            // Pushes the end-effector away from the hand, i.e. along -d.
            prop_assert!(f.dot(d) <= 0.0);
            prop_assert!(f.cross(d).norm() <= 1e-9 * (1.0 + f.norm() * d.norm()));
            // Power it injects into the closing motion is negative: it opposes approach.
            prop_assert!(f.dot(-d_dot) <= 1e-12);
        }
    }

    #[test]
    fn time_law_is_continuous_monotone_and_arrives_on_time(
        start in vec3(1.0), goal in vec3(1.0), speed in 0.05..2.0f64, t0 in 0.0..10.0f64,
    ) {
        let f = TimeLawFilter::new(start, goal, speed, t0).unwrap();
        let length = start.distance(goal);
        prop_assume!(length > 1e-6);
        let total = length / speed;
        prop_assert!((f.duration() - total).abs() <= 1e-12 * (1.0 + total));
        prop_assert_eq!(filtered_goal_position(&f, t0), start);
        // `t0 + total - t0` can miss `total` by an ulp.
        prop_assert!(filtered_goal_position(&f, t0 + total).distance(goal) <= 1e-12);
        prop_assert_eq!(filtered_goal_position(&f, t0 + total + 5.0), goal);
        let n = 2000;
        let mut prev = (f.phase(t0), filtered_goal_position(&f, t0));
        for i in 1..=n {
            let t = t0 + total * f64::from(i) / f64::from(n);
            let (s, p) = (f.phase(t), filtered_goal_position(&f, t));
            prop_assert!(s > prev.0, "phase not strictly increasing at {t}");
            // Lipschitz with constant `speed`: no jumps.
            prop_assert!(p.distance(prev.1) <= speed * total / f64::from(n) * (1.0 + 1e-9) + 1e-12);
            prev = (s, p);
        }
    }
}

#[test]
fn goal_spring_examples() {
    let spec = GoalSpringSpec::new(1000.0, 0.0, 10.0).unwrap();
    let f = goal_spring_force(Vec3::ZERO, Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0), Vec3::ZERO, &spec);
    assert_eq!(f, Vec3::new(10.0, 0.0, 0.0));
    let spec = GoalSpringSpec::new(3000.0, 0.0, 30.0).unwrap();
    let f = goal_spring_force(Vec3::ZERO, Vec3::ZERO, Vec3::new(0.005, 0.0, 0.0), Vec3::ZERO, &spec);
    assert!((f - Vec3::new(15.0, 0.0, 0.0)).norm() < 1e-12);
    let p = Vec3::new(0.3, -0.2, 0.1);
    assert_eq!(goal_spring_force(p, Vec3::ZERO, p, Vec3::ZERO, &spec), Vec3::ZERO);
}

#[test]
fn table_obstacle_lifts_while_grasping() {
    let spring = GaussianSpringSpec::from_sigma_max_force(0.01, -5.0).unwrap();
    let spec = ObstacleSpringSpec { spring, plane_height: 0.0, grasp_lift: 0.03 };
    let at = |z: f64, g: bool| obstacle_force(Vec3::new(0.1, 0.1, z), g, &spec);
    // Peak push one sigma above the effective plane, straight up.
    let free = at(0.01, false);
    assert!((free.z - 5.0).abs() < 1e-9 && free.x == 0.0 && free.y == 0.0);
    let held = at(0.04, true);
    assert!((held.z - 5.0).abs() < 1e-9);
    assert!(at(0.04, false).z < 0.02);
}
