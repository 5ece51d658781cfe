use neurotrack::decoder::{cross_validate_and_train, default_lambda_grid, pearson, reconstruct};
use neurotrack::infotheory::EmbedSpec;
use neurotrack::redundancy::{directed_redundancy_bound, rate_s_to_shat};
use neurotrack::signals::{normalize, LagWindow, MultichannelRecording, TimeSeries};
use neurotrack::synth::{make_aad_scenario, simulate, AadScenario, AadTrial, DrivenSystem};

const N: usize = 10_000;

fn scenario(attended: f64, distractor: f64, seed: u64) -> Vec<AadTrial> {
    make_aad_scenario(&AadScenario {
        n_subjects: 1,
        n_trials: 3,
        n_samples: N,
        attended_coupling: attended,
        distractor_coupling: distractor,
        gain_spread: 0.0,
        seed,
        ..Default::default()
    })
    .unwrap()
}

struct Evaluation {
    rho: f64,
    r_s_to_shat: f64,
}

/// Train on the first two trials, evaluate on the third.
fn evaluate(trials: &[AadTrial], stimulus: fn(&AadTrial) -> &TimeSeries, with_rate: bool) -> Evaluation {
    let w = LagWindow::new(0, 16).unwrap();
    let eeg: Vec<MultichannelRecording> = trials.iter().map(|t| t.eeg.normalized().unwrap()).collect();
    let pairs: Vec<_> = eeg[..2].iter().zip(trials[..2].iter().map(stimulus)).collect();
    let (d, _) = cross_validate_and_train(&pairs, w, &default_lambda_grid()).unwrap();
    let shat = normalize(&reconstruct(&d, &eeg[2]).unwrap()).unwrap();
    let s = stimulus(&trials[2]).slice(w.valid_rows(N).unwrap()).unwrap();
    let r_s_to_shat = if with_rate { rate_s_to_shat(&s, &shat, &EmbedSpec::default()).unwrap() } else { f64::NAN };
    Evaluation { rho: pearson(&shat, &s).unwrap(), r_s_to_shat }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn attended_decoder_beats_distractor_decoder() {
    let gaps: Vec<f64> = (0..20)
        .map(|seed| {
            let trials = scenario(1.0, 0.0, seed);
            evaluate(&trials, |t| &t.attended, false).rho - evaluate(&trials, |t| &t.distractor, false).rho
        })
        .collect();
    let gap = median(gaps);
    assert!(gap > 0.2, "median gap {gap}");
}

#[test]
fn uncoupled_scenario_has_no_reconstruction() {
    let bound = 3.0 / (N as f64).sqrt();
    let mut att = Vec::new();
    let mut dst = Vec::new();
    for seed in 0..20 {
        let trials = scenario(0.0, 0.0, 100 + seed);
        att.push(evaluate(&trials, |t| &t.attended, false).rho.abs());
        dst.push(evaluate(&trials, |t| &t.distractor, false).rho.abs());
    }
    let (a, d) = (median(att), median(dst));
    assert!(a < bound && d < bound, "median |rho| attended {a}, distractor {d}, bound {bound}");
}

#[test]
fn coupling_sweep_is_monotone() {
    let couplings = [0.1, 0.2, 0.35, 0.6, 1.0];
    let mut rhos = Vec::new();
    let mut rates = Vec::new();
    for c in couplings {
        let evals: Vec<Evaluation> =
            (0..5).map(|seed| evaluate(&scenario(c, 0.3, 200 + seed), |t| &t.attended, true)).collect();
        rhos.push(median(evals.iter().map(|e| e.rho).collect()));
        rates.push(median(evals.iter().map(|e| e.r_s_to_shat).collect()));
    }
    assert!(rhos.windows(2).all(|p| p[0] < p[1]), "rho {rhos:?}");
    assert!(rates.windows(2).all(|p| p[0] < p[1]), "rate {rates:?}");
}

#[test]
fn stronger_coupling_raises_the_bound() {
    let system = |to_source: f64, to_target: f64| DrivenSystem {
        driver_ar: 0.7,
        source_ar: 0.4,
        target_ar: 0.5,
        driver_to_source: vec![to_source; 4],
        source_to_target: vec![to_target; 4],
    };
    let strong = system(0.8, 0.4).model().unwrap();
    let weak = system(0.2, 0.1).model().unwrap();
    let e = EmbedSpec::new(4, 4, 1).unwrap();
    let r_min = |model, seed| {
        let r = simulate(model, N, seed).unwrap();
        let (s, rest) = r.channels().split_first().unwrap();
        let (shat, electrodes) = rest.split_last().unwrap();
        let electrodes = MultichannelRecording::new(electrodes.to_vec(), "S01", "T001", r.condition).unwrap();
        directed_redundancy_bound(s, &electrodes, shat, &e).unwrap().r_min
    };
    let wins = (0..20).filter(|&seed| r_min(&strong, seed) > r_min(&weak, 1000 + seed)).count();
    assert!(wins >= 19, "strong > weak on {wins} of 20 seeds");
}
