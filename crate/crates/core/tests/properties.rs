use chrono::NaiveDate;
use epicontrol::abc::{
    distance, pmc_abc, AbcConfig, DistanceWeights, PriorSpecification, SimulatorRunner,
};
use epicontrol::control::{
    anneal, economic_cost, evaluate_cost, hospital_penalty, AnnealConfig, ControlBounds,
    ControlProblem, ControlSchedule, CostWeights,
};
use epicontrol::data::{england_census, england_contacts};
use epicontrol::mobility::{
    aggregate_other, multiplier_to_percent, parse_health_readers, percent_to_multiplier,
    savgol_smooth, AgeBandMapping, MobilityLevels, MobilitySeries, ObservationSet,
};
use epicontrol::model::{
    initialize_state, AlphaMultipliers, ContactMatrix, EpidemicParameters, PopulationCensus,
    Simulator, AGE_GROUPS,
};
use epicontrol::monitor::Silent;
use epicontrol::repro::{build_next_generation_matrix, reproduction_number};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params_from(seed: u64) -> EpidemicParameters {
    PriorSpecification::default().sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn simulator() -> Simulator {
    Simulator::new(england_contacts(), england_census()).unwrap()
}

fn levels() -> impl Strategy<Value = MobilityLevels> {
    (0.0..1.2f64, 0.0..1.2f64, 0.0..1.2f64).prop_map(|(s, w, o)| MobilityLevels::new(s, w, o))
}

fn alphas() -> impl Strategy<Value = AlphaMultipliers> {
    let v = || prop::array::uniform5(0.0..1.5f64);
    (v(), v(), v(), v()).prop_map(|(home, work, school, other)| AlphaMultipliers {
        home,
        work,
        school,
        other,
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_conserve_stay_nonnegative_and_are_monotone(seed in any::<u64>(), m in levels()) {
        let p = params_from(seed);
        let sim = simulator();
        let mobility = MobilitySeries::constant(0, 80, m);
        let traj = sim.simulate(&p, &mobility, 0, 80, 17).unwrap();
        let n = sim.census.0;
        for w in traj.states.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            for i in 0..AGE_GROUPS {
                prop_assert!(b.s[i] <= a.s[i] + 1e-9 * n[i]);
                prop_assert!(b.d[i] >= a.d[i] - 1e-9 * n[i]);
            }
        }
        for s in &traj.states {
            let totals = s.group_totals();
            for i in 0..AGE_GROUPS {
                prop_assert!((totals[i] - n[i]).abs() <= 1e-8 * n[i]);
            }
            prop_assert!(s.min_entry() >= -1e-9);
        }
    }

    #[test]
    fn no_seed_infections_means_no_epidemic(seed in any::<u64>(), m in levels()) {
        let mut p = params_from(seed);
        p.n_in = 0.0;
        let sim = simulator();
        let traj = sim.simulate(&p, &MobilitySeries::constant(0, 30, m), 0, 30, 17).unwrap();
        let first = traj.states[0];
        prop_assert!(traj.states.iter().all(|s| *s == first));
    }

    #[test]
    fn assembly_is_linear_in_each_location_multiplier(
        base in alphas(),
        x in prop::array::uniform5(0.0..1.5f64),
        y in prop::array::uniform5(0.0..1.5f64),
        c in 0.0..3.0f64,
        location in 0usize..4,
    ) {
        let set = england_contacts();
        let with = |v: [f64; AGE_GROUPS]| {
            let mut a = base;
            *[&mut a.home, &mut a.work, &mut a.school, &mut a.other][location] = v;
            set.assemble(&a)
        };
        let add = |a: [f64; AGE_GROUPS], b: [f64; AGE_GROUPS]| std::array::from_fn(|i| a[i] + b[i]);
        let scale = |a: [f64; AGE_GROUPS]| std::array::from_fn(|i| c * a[i]);
        let zero = with([0.0; AGE_GROUPS]);
        let (mx, my, mxy, mcx) = (with(x), with(y), with(add(x, y)), with(scale(x)));
        for i in 0..AGE_GROUPS {
            for j in 0..AGE_GROUPS {
                let tol = 1e-12 * (1.0 + mxy.0[i][j].abs());
                prop_assert!((mxy.0[i][j] + zero.0[i][j] - mx.0[i][j] - my.0[i][j]).abs() <= tol);
                prop_assert!((mcx.0[i][j] - zero.0[i][j] - c * (mx.0[i][j] - zero.0[i][j])).abs() <= tol * (1.0 + c));
            }
        }
    }
}

proptest! {
    #[test]
    fn percent_multiplier_round_trip(m in 0.0..2.0f64, pct in -100.0..150.0f64) {
        prop_assert!((percent_to_multiplier(multiplier_to_percent(m)) - m).abs() <= 1e-12);
        prop_assert!((multiplier_to_percent(percent_to_multiplier(pct)) - pct).abs() <= 1e-10);
    }

    #[test]
    fn other_aggregate_is_a_convex_combination(v in prop::array::uniform4(0.0..1.5f64), same in 0.0..1.5f64) {
        let a = aggregate_other(v[0], v[1], v[2], v[3]);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a >= lo - 1e-15 && a <= hi + 1e-15);
        prop_assert!((aggregate_other(same, same, same, same) - same).abs() <= 1e-15);
        // Affine: the map commutes with mixing two inputs.
        let w = [0.3, 0.2, 0.9, 0.4];
        let mix: [f64; 4] = std::array::from_fn(|i| 0.25 * v[i] + 0.75 * w[i]);
        let lhs = aggregate_other(mix[0], mix[1], mix[2], mix[3]);
        let rhs = 0.25 * a + 0.75 * aggregate_other(w[0], w[1], w[2], w[3]);
        prop_assert!((lhs - rhs).abs() <= 1e-14);
    }

    #[test]
    fn smoothing_keeps_the_mean_of_a_weekly_signal(
        level in 0.3..1.2f64,
        rel_amp in 0.0..0.3f64,
        phase in 0.0..std::f64::consts::TAU,
        weeks in 6usize..30,
    ) {
        let x: Vec<f64> = (0..weeks * 7)
            .map(|t| level * (1.0 + rel_amp * (std::f64::consts::TAU * t as f64 / 7.0 + phase).sin()))
            .collect();
        let y = savgol_smooth(&x, 15, 2).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((mean(&y) - mean(&x)).abs() <= 0.02 * mean(&x));
    }

    #[test]
    fn rebinned_deaths_keep_daily_totals(counts in prop::collection::vec(prop::array::uniform9(0u32..500), 1..20)) {
        let labels = ["0-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80+"];
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let mut deaths = String::from("date,age_band,count\n");
        let mut hospital = String::from("date,occupancy\n");
        for (k, day) in counts.iter().enumerate() {
            let date = start + chrono::Duration::days(k as i64);
            for (label, c) in labels.iter().zip(day) {
                deaths.push_str(&format!("{date},{label},{c}\n"));
            }
            hospital.push_str(&format!("{date},100\n"));
        }
        let (obs, _) = parse_health_readers(
            deaths.as_bytes(), "deaths", hospital.as_bytes(), "hospital", &AgeBandMapping::default(), start,
        ).unwrap();
        prop_assert_eq!(obs.horizon(), counts.len());
        for (t, day) in counts.iter().enumerate() {
            let source: u32 = day.iter().sum();
            let binned: f64 = obs.deaths_on(t + 1).unwrap().iter().sum();
            prop_assert_eq!(binned, source as f64);
        }
    }
}

fn homogeneous(census: &PopulationCensus, contacts: f64) -> ContactMatrix {
    let total = census.total();
    ContactMatrix(std::array::from_fn(|_| {
        std::array::from_fn(|j| contacts * census.0[j] / total)
    }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn r_is_linear_in_beta(seed in any::<u64>(), a in alphas(), c in 0.01..20.0f64) {
        let p = params_from(seed);
        let m = england_contacts().assemble(&a);
        let census = england_census();
        let r = reproduction_number(&p, &m, &census).unwrap();
        let scaled = EpidemicParameters { beta: c * p.beta, ..p };
        let rc = reproduction_number(&scaled, &m, &census).unwrap();
        prop_assert!(rel_close(rc, c * r, 1e-9), "{rc} vs {}", c * r);
    }

    #[test]
    fn one_group_closed_form(
        seed in any::<u64>(),
        n in prop::array::uniform5(1.0e3..1.0e7f64),
        contacts in 0.5..30.0f64,
        rho in 0.0..1.0f64,
    ) {
        let mut p = params_from(seed);
        p.rho = [rho; AGE_GROUPS];
        let census = PopulationCensus(n);
        let r = reproduction_number(&p, &homogeneous(&census, contacts), &census).unwrap();
        let closed = p.beta * contacts * (rho / p.gamma_c() + (1.0 - rho) / p.gamma_r());
        prop_assert!(rel_close(r, closed, 1e-10), "{r} vs {closed}");
    }

    #[test]
    fn raising_a_multiplier_never_lowers_r(
        seed in any::<u64>(),
        a in alphas(),
        location in 0usize..4,
        group in 0usize..AGE_GROUPS,
        bump in 0.0..1.0f64,
    ) {
        let p = params_from(seed);
        let set = england_contacts();
        let census = england_census();
        let before = reproduction_number(&p, &set.assemble(&a), &census).unwrap();
        let mut b = a;
        [&mut b.home, &mut b.work, &mut b.school, &mut b.other][location][group] += bump;
        let after = reproduction_number(&p, &set.assemble(&b), &census).unwrap();
        prop_assert!(after >= before * (1.0 - 1e-12), "{after} < {before}");
    }

    #[test]
    fn only_exposed_rows_of_the_next_generation_matrix_are_nonzero(seed in any::<u64>(), a in alphas()) {
        let p = params_from(seed);
        let k = build_next_generation_matrix(&p, &england_contacts().assemble(&a), &england_census()).unwrap();
        for row in AGE_GROUPS..k.nrows() {
            prop_assert!(k.row(row).iter().all(|v| *v == 0.0));
        }
        prop_assert!(k.iter().all(|v| *v >= -1e-15));
    }
}

fn observations(deaths: Vec<[f64; AGE_GROUPS]>, hosp: Vec<f64>) -> ObservationSet {
    let hospitalised = hosp
        .into_iter()
        .enumerate()
        .map(|(k, h)| (k + 1 >= 18).then_some(h))
        .collect();
    ObservationSet::new(deaths, hospitalised).unwrap()
}

proptest! {
    #[test]
    fn distance_is_nonnegative_and_zero_only_on_equal_series(
        days in prop::collection::vec((prop::array::uniform5(0.0..50.0f64), 0.0..5000.0f64), 20..40),
        w in prop::array::uniform5(0.1..3.0f64),
        w_i in 0.01..1.0f64,
        which in any::<prop::sample::Index>(),
        group in 0usize..=AGE_GROUPS,
        delta in 0.5..10.0f64,
    ) {
        let weights = DistanceWeights { w_d: w, w_i };
        let (deaths, hosp): (Vec<_>, Vec<_>) = days.into_iter().unzip();
        let obs = observations(deaths.clone(), hosp.clone());
        prop_assert_eq!(distance(&obs, &obs, &weights).unwrap(), 0.0);

        let (mut d2, mut h2) = (deaths, hosp);
        // Perturb one observed entry: a death count, or an occupancy on a
        // day the distance uses.
        if group < AGE_GROUPS {
            let k = which.index(d2.len());
            d2[k][group] += delta;
        } else {
            let k = 17 + which.index(h2.len() - 17);
            h2[k] += delta;
        }
        let other = observations(d2, h2);
        let d = distance(&other, &obs, &weights).unwrap();
        prop_assert!(d > 0.0);
        prop_assert_eq!(d, distance(&obs, &other, &weights).unwrap());
    }

    #[test]
    fn hospital_penalty_is_convex_hinge(a in 0.0..4.0e4f64, b in 0.0..4.0e4f64, lambda in 0.0..1.0f64, h in 0.0..2.0e4f64) {
        let p = |x| hospital_penalty(x, h);
        prop_assert!(p(lambda * a + (1.0 - lambda) * b) <= lambda * p(a) + (1.0 - lambda) * p(b) + 1e-9);
        let x = a.min(h);
        prop_assert_eq!(p(x), 0.0);
        prop_assert!((p(h + b) - b).abs() <= 1e-9 * (1.0 + b));
    }
}

fn control_problem_parts(
    seeds: &[u64],
    t0: usize,
) -> (
    Simulator,
    Vec<EpidemicParameters>,
    Vec<epicontrol::model::CompartmentState>,
) {
    let sim = simulator();
    let samples: Vec<_> = seeds.iter().map(|s| params_from(*s)).collect();
    let mobility = MobilitySeries::constant(0, t0, MobilityLevels::new(0.1, 0.4, 0.5));
    let states = samples
        .iter()
        .map(|p| *sim.simulate(p, &mobility, 0, t0, 17).unwrap().final_state())
        .collect();
    (sim, samples, states)
}

fn schedule(start: usize, days: &[(f64, f64, f64)]) -> ControlSchedule {
    ControlSchedule {
        start_day: start,
        days: days
            .iter()
            .map(|&(s, w, o)| MobilityLevels::new(s, w, o))
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cost_grows_with_each_economic_weight(
        seeds in prop::collection::vec(any::<u64>(), 1..4),
        days in prop::collection::vec((0.1..0.99f64, 0.1..0.99f64, 0.1..0.99f64), 1..8),
        eps in prop::array::uniform3(0.0..500.0f64),
        channel in 0usize..3,
        extra in 0.1..500.0f64,
    ) {
        let (sim, samples, states) = control_problem_parts(&seeds, 40);
        let s = schedule(40, &days);
        let problem = |e: [f64; 3]| ControlProblem {
            simulator: &sim,
            samples: &samples,
            initial_states: &states,
            weights: CostWeights::new(e[0], e[1], e[2]),
            h_max: 10_000.0,
        };
        let base = evaluate_cost(&problem(eps), &s).unwrap().total;
        let mut more = eps;
        more[channel] += extra;
        let raised = evaluate_cost(&problem(more), &s).unwrap().total;
        prop_assert!(raised > base, "{raised} <= {base}");
    }

    #[test]
    fn single_sample_cost_is_that_trajectory_cost(
        seed in any::<u64>(),
        days in prop::collection::vec((0.1..1.0f64, 0.31..1.0f64, 0.41..1.0f64), 1..10),
        eps in prop::array::uniform3(0.0..300.0f64),
        h_max in 0.0..20_000.0f64,
    ) {
        let (sim, samples, states) = control_problem_parts(&[seed], 45);
        let s = schedule(45, &days);
        let weights = CostWeights::new(eps[0], eps[1], eps[2]);
        let problem = ControlProblem { simulator: &sim, samples: &samples, initial_states: &states, weights, h_max };
        let got = evaluate_cost(&problem, &s).unwrap();

        let p = &samples[0];
        let traj = sim.advance(p, states[0], 45, days.len(), |d| Ok(sim.lockdown_matrix(p, &s.level(d).unwrap()))).unwrap();
        let mut sanitary = 0.0;
        for k in 0..days.len() {
            let deaths: f64 = (0..AGE_GROUPS).map(|i| traj.states[k + 1].d[i] - traj.states[k].d[i]).sum();
            let ic = traj.states[k + 1].hospitalised();
            sanitary += 0.5 * (deaths + (ic - h_max).max(0.0));
        }
        let r = reproduction_number(p, &sim.lockdown_matrix(p, s.days.last().unwrap()), &sim.census).unwrap();
        let want = sanitary + economic_cost(&s, &weights) + r;
        prop_assert!(rel_close(got.total, want, 1e-9), "{} vs {want}", got.total);
        prop_assert!(rel_close(got.terminal_r, r, 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn block_schedules_respect_bounds(
        x in prop::collection::vec(-0.5..1.5f64, 3..30),
        block in 1usize..8,
    ) {
        let bounds = ControlBounds::default();
        let blocks = x.len() / 3;
        let n_days = blocks * block;
        let x = &x[..blocks * 3];
        let (lo, hi) = bounds.block_box(blocks);
        let inside: Vec<f64> = x.iter().zip(lo.iter().zip(&hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
        let s = ControlSchedule::from_blocks(10, n_days, block, &inside).unwrap();
        prop_assert!(s.respects(&bounds));
        prop_assert_eq!(s.len(), n_days);
        let raw = ControlSchedule { start_day: 10, days: x.chunks(3).map(|c| MobilityLevels::new(c[0], c[1], c[2])).collect() };
        prop_assert!(raw.clipped(&bounds).respects(&bounds));
    }

    #[test]
    fn annealing_never_ends_above_its_start(
        centre in prop::collection::vec(-2.0..2.0f64, 1..5),
        x0 in prop::collection::vec(-3.0..3.0f64, 5),
        wiggle in 0.0..3.0f64,
        seed in any::<u64>(),
        budget in 5usize..300,
    ) {
        let dim = centre.len();
        let lower = vec![-3.0; dim];
        let upper = vec![3.0; dim];
        let mut f = |x: &[f64]| -> epicontrol::Result<f64> {
            Ok(x.iter().zip(&centre).map(|(a, c)| (a - c).powi(2) + wiggle * (5.0 * a).sin()).sum())
        };
        let config = AnnealConfig { budget, seed, ..Default::default() };
        let start = &x0[..dim];
        let a = anneal(&mut f, &lower, &upper, Some(start), &config, &Silent).unwrap();
        prop_assert!(a.cost <= a.initial_cost);
        prop_assert!(a.evaluations <= budget);
        prop_assert!(a.x.iter().all(|v| (-3.0..=3.0).contains(v)));
        let b = anneal(&mut f, &lower, &upper, Some(start), &config, &Silent).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn pmc_tolerances_fall_and_weights_sum_to_one(seed in any::<u64>()) {
        let sim = simulator();
        let truth = EpidemicParameters::england_may_posterior_mean();
        let mobility = MobilitySeries::constant(0, 40, MobilityLevels::new(0.1, 0.35, 0.45));
        let traj = sim.simulate(&truth, &mobility, 0, 40, 17).unwrap();
        let obs = epicontrol::abc::observe(&traj, 40).unwrap();
        let runner = SimulatorRunner { simulator: sim, mobility, lockdown_start: 17 };
        let config = AbcConfig { generations: 3, particles: 12, seed, ..Default::default() };
        let e = pmc_abc(&runner, &obs, &PriorSpecification::default(), &config, &Silent).unwrap();
        for w in e.history.windows(2) {
            prop_assert!(w[1].tolerance < w[0].tolerance);
        }
        let total: f64 = e.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(e.particles.iter().all(|p| p.distance < e.tolerance));
    }
}

#[test]
fn seeding_is_consistent_with_initialisation() {
    // Not random, but guards the property tests' premise that prior draws
    // are valid starting points.
    for seed in 0..50 {
        let p = params_from(seed);
        p.validate().unwrap();
        initialize_state(&p, &england_census()).unwrap();
    }
}
