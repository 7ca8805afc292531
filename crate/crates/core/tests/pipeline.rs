mod common;

use std::sync::OnceLock;

use common::{small_config, small_dataset, train_bundle};
use hrtf_spca::evaluation::error_summary;
use hrtf_spca::synthesis::import_f32;
use hrtf_spca::{
    export_hrir, sd_report, synthesize, Ear, Error, ExportFormat, Family, HrtfDataset, Method, PredictorBundle,
    SpectralPlan, SynthRequest,
};

fn fixture() -> &'static (HrtfDataset, PredictorBundle<f64>) {
    static CELL: OnceLock<(HrtfDataset, PredictorBundle<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = small_dataset();
        let b = train_bundle(&ds, &small_config(), &Family::ALL);
        (ds, b)
    })
}

fn request(ds: &HrtfDataset, az: f64, el: f64, method: Method) -> SynthRequest {
    let id = &ds.test_subjects[0];
    SynthRequest {
        anthro: ds.subject(id).unwrap().anthro.clone().unwrap(),
        az_deg: az,
        el_deg: el,
        method,
        zero_weights: false,
    }
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Values as stored in the f32 blobs.
fn q32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

#[test]
fn bundle_round_trips_through_disk() {
    let (_, b) = fixture();
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    let back = PredictorBundle::<f64>::load(dir.path()).unwrap();
    for (m, l) in b.spca.iter().zip(&back.spca) {
        assert_eq!(q32(m.basis.as_slice()), l.basis.as_slice());
        assert_eq!(q32(&m.h_av), l.h_av);
        assert_eq!(m.eigenvalues, l.eigenvalues);
        assert_eq!(m.mu, l.mu);
        assert_eq!((&m.directions, m.reference_column), (&l.directions, l.reference_column));
    }
    let again = tempfile::tempdir().unwrap();
    back.save(again.path()).unwrap();
    assert_eq!(back, PredictorBundle::<f64>::load(again.path()).unwrap());
    assert!(b.weights == back.weights, "weights");
    assert!(b.dvspc == back.dvspc, "dvspc");
    assert!(b.hav == back.hav, "hav");
    assert!(b.itd == back.itd, "itd");
    let (pa, pb) = (b.pca.as_ref().unwrap(), back.pca.as_ref().unwrap());
    assert_eq!(pa.nets, pb.nets);
    assert_eq!(pa.directions, pb.directions);
    for (ma, mb) in pa.models.iter().flatten().zip(pb.models.iter().flatten()) {
        assert_eq!(q32(ma.basis.as_slice()), mb.basis.as_slice());
        assert_eq!(q32(&ma.h_av), mb.h_av);
        assert_eq!(ma.eigenvalues, mb.eigenvalues);
    }
    assert!(b.generic == back.generic, "generic");
    assert!(b.config == back.config, "config");
    assert!(b.reports == back.reports, "reports");
    assert!(b.grid == back.grid && b.n_bins == back.n_bins && b.sample_rate == back.sample_rate);
}

#[test]
fn undelayed_ear_keeps_composed_magnitude() {
    let (ds, b) = fixture();
    let plan = SpectralPlan::<f64>::new(b.n_bins);
    for (az, el) in [(-65.0, 0.0), (30.0, 45.0), (0.0, 135.0), (40.0, 180.0), (12.3, 41.7)] {
        let r = synthesize(b, &request(ds, az, el, Method::Spca)).unwrap();
        let (h, log) = if r.itd_ms >= 0.0 {
            (&r.right, &r.log_mag_right)
        } else {
            (&r.left, &r.log_mag_left)
        };
        let got = plan.log_spectrum(h).unwrap();
        for (a, e) in got.bins_db.iter().zip(&log.bins_db) {
            assert!((a - e).abs() < 1e-4, "({az}, {el}): {a} vs {e}");
        }
    }
}

#[test]
fn training_is_bit_reproducible() {
    let ds = small_dataset();
    let cfg = small_config();
    let a = train_bundle(&ds, &cfg, &[Family::Hav, Family::Itd]);
    let b = train_bundle(&ds, &cfg, &[Family::Hav, Family::Itd]);
    assert_eq!(a, b);
    let r1 = synthesize(&a, &request(&ds, 20.0, 11.25, Method::Generic)).unwrap();
    let r2 = synthesize(&b, &request(&ds, 20.0, 11.25, Method::Generic)).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn f32_export_round_trips() {
    let (ds, b) = fixture();
    let r = synthesize(b, &request(ds, -30.0, 22.5, Method::Spca)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.f32");
    export_hrir(&r, &path, ExportFormat::F32).unwrap();
    let (l, rr, side) = import_f32(&path).unwrap();
    assert_eq!(side.hrir_length, b.n_bins);
    assert_eq!(side.method, Method::Spca);
    assert!((side.itd_ms - r.itd_ms).abs() < 1e-12);
    for (x, y) in l.iter().zip(&r.left).chain(rr.iter().zip(&r.right)) {
        assert_eq!(*x, *y as f32);
    }
    export_hrir(&r, &dir.path().join("h.wav"), ExportFormat::Wav).unwrap();
    assert!(dir.path().join("h.wav.json").exists());
}

#[test]
fn error_summary_matches_training_reports() {
    let (ds, b) = fixture();
    let s = error_summary(b, ds).unwrap();
    let rep = |k: &str| b.reports[k].overall;
    assert!((s.e_d.unwrap() - rep("weights")).abs() <= 1e-9 * rep("weights"));
    assert!((s.e_w.unwrap() - rep("dvspc")).abs() <= 1e-9 * rep("dvspc"));
    assert!((s.e_h.unwrap() - rep("hav")).abs() <= 1e-9 * rep("hav"));
    assert!((s.e_t.unwrap() - rep("itd")).abs() <= 1e-9 * rep("itd"));
}

#[test]
fn sd_report_shapes_and_self_distortion() {
    let (ds, b) = fixture();
    let dirs: Vec<usize> = (0..b.grid.direction_count()).step_by(5).collect();
    let rep = sd_report(b, ds, &[Method::Spca, Method::Generic], &ds.test_subjects, &dirs).unwrap();
    assert_eq!(rep.bins_hz.len(), b.n_bins / 2 + 1);
    for m in &rep.methods {
        assert_eq!(m.per_subject.len(), ds.test_subjects.len());
        assert!(m.overall_db.is_finite() && m.overall_db > 0.0);
    }
    let own = sd_report(b, ds, &[Method::Generic], &[ds.generic_subject_id.clone()], &dirs).unwrap();
    assert_eq!(own.methods[0].overall_db, 0.0);
}

#[test]
fn nearby_directions_give_nearby_spectra() {
    let (ds, b) = fixture();
    let base = synthesize(b, &request(ds, 20.0, 30.0, Method::Spca)).unwrap();
    let near = synthesize(b, &request(ds, 21.0, 31.0, Method::Spca)).unwrap();
    let far = synthesize(b, &request(ds, 50.0, 60.0, Method::Spca)).unwrap();
    let d_near = mean_abs_diff(&base.log_mag_left.bins_db, &near.log_mag_left.bins_db);
    let d_far = mean_abs_diff(&base.log_mag_left.bins_db, &far.log_mag_left.bins_db);
    assert!(d_near < d_far, "near {d_near} dB, far {d_far} dB");
}

#[test]
fn off_grid_queries() {
    let (ds, b) = fixture();
    assert!(synthesize(b, &request(ds, 12.3, 41.7, Method::Spca)).is_ok());
    for m in [Method::Pca, Method::Generic] {
        match synthesize(b, &request(ds, 12.3, 41.7, m)) {
            Err(e @ Error::OffGrid { .. }) => {
                assert!(e.to_string().starts_with("off-grid direction unsupported by"), "{e}")
            }
            other => panic!("{m}: expected OffGrid, got {other:?}"),
        }
    }
    assert!(synthesize(b, &request(ds, 100.0, 0.0, Method::Spca)).is_err());
}

#[test]
fn generic_returns_mannequin_hrirs() {
    let (ds, b) = fixture();
    let dir = b.grid.index_of(-45.0, 11.25).unwrap();
    let r = synthesize(b, &request(ds, -45.0, 11.25, Method::Generic)).unwrap();
    let g = ds.generic_subject().unwrap();
    let n = ds.hrir_length;
    for (x, y) in r.left.iter().zip(g.hrir(Ear::Left, dir, n)) {
        assert_eq!(*x, *y as f64);
    }
    for (x, y) in r.right.iter().zip(g.hrir(Ear::Right, dir, n)) {
        assert_eq!(*x, *y as f64);
    }
}

#[test]
fn test_subjects_do_not_drive_weight_training() {
    let ds = small_dataset();
    let cfg = small_config();
    let a = train_bundle(&ds, &cfg, &[Family::Weights]);
    let mut altered = ds.clone();
    let id = altered.test_subjects[0].clone();
    let s = altered.subjects.iter_mut().find(|s| s.subject_id == id).unwrap();
    let x1 = s.anthro.as_mut().unwrap().x1.as_mut().unwrap();
    *x1 *= 1.3;
    let b = train_bundle(&altered, &cfg, &[Family::Weights]);
    assert_eq!(a.weights, b.weights);
}
