use ebinfer::distributions::GaussianParams;
use ebinfer::fdr::{fdr_hat, true_fdr, AltDensity, NullModel, Side, TwoGroupsModel};
use ebinfer::simlab::SimRng;
use ebinfer::ZVector;

#[test]
fn tail_area_estimate_tracks_true_fdr() {
    let alt = GaussianParams { mean: 3.0, sd: 1.0 };
    let model = TwoGroupsModel::new(0.9, GaussianParams::standard(), AltDensity::Gaussian(alt)).unwrap();
    let null = NullModel::theoretical(0.9).unwrap();
    let cutoffs: Vec<f64> = (0..=20).map(|i| -1.0 + 0.2 * i as f64).collect();
    let truth: Vec<f64> = cutoffs.iter().map(|&c| true_fdr(&model, c, Side::Right).unwrap()).collect();

    let reps = 100;
    let mut good = 0;
    for r in 0..reps {
        let mut rng = SimRng::new(5_100, r);
        let z: Vec<f64> = (0..5000)
            .map(|_| {
                if rng.uniform() < 0.9 {
                    rng.std_normal()
                } else {
                    rng.normal(&alt)
                }
            })
            .collect();
        let z = ZVector::new(z).unwrap();
        let ok = cutoffs.iter().zip(&truth).all(|(&c, &t)| {
            let p = fdr_hat(&z, c, &null, Side::Right).unwrap();
            p.n_exceed < 200 || (p.value() - t).abs() <= 0.03
        });
        good += ok as usize;
    }
    assert!(good as f64 >= 0.9 * reps as f64, "{good} of {reps}");
}

#[test]
fn one_extra_exceedance_moves_fdr_by_its_share() {
    let null = NullModel::theoretical(1.0).unwrap();
    let base: Vec<f64> = (0..6033).map(|i| if i < 49 { 3.5 } else { 0.0 }).collect();
    let a = fdr_hat(&ZVector::new(base.clone()).unwrap(), 3.0, &null, Side::Right).unwrap();
    let mut more = base;
    more[100] = 3.2;
    let b = fdr_hat(&ZVector::new(more).unwrap(), 3.0, &null, Side::Right).unwrap();
    assert_eq!(a.e0, b.e0);
    assert!((a.value() / b.value() - 50.0 / 49.0).abs() < 1e-12);
}
