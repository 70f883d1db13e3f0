use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn skeleton(mut f: impl FnMut(usize) -> (f64, f64)) -> KeypointFrame {
    let joints = (0..JOINTS).map(|j| {
        let (x, y) = f(j);
        Joint::new(x, y, 0.9)
    });
    KeypointFrame::new(0.0, joints.collect()).unwrap()
}

fn random_skeleton(rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> KeypointFrame {
    let mut k = skeleton(|_| (cx + rng.gen_range(-30.0..30.0), cy + rng.gen_range(-60.0..60.0)));
    for (i, j) in k.joints.iter_mut().enumerate() {
        if i != NECK && i != MID_HIP && rng.gen_bool(0.1) {
            *j = Joint::default();
        }
    }
    k
}

#[test]
fn scaler_examples() {
    let p = ScalerParams::fit(&[1.0, 2.0, 3.0], 1).unwrap();
    let mut v = vec![1.0, 2.0, 3.0];
    p.apply_in_place(&mut v).unwrap();
    assert_eq!(v, vec![0.0, 0.5, 1.0]);

    let p = ScalerParams::fit(&[5.0, 5.0, 5.0], 1).unwrap();
    let mut v = vec![5.0, 5.0, 5.0];
    p.apply_in_place(&mut v).unwrap();
    assert_eq!(v, vec![0.0; 3]);

    let p = ScalerParams::fit(&[0.0, 10.0], 1).unwrap();
    let mut v = vec![15.0];
    p.apply_in_place(&mut v).unwrap();
    assert_eq!(v, vec![1.5]);
}

#[test]
fn scaler_apply_before_fit_is_state_error() {
    let s = MinMaxScaler::new();
    assert!(matches!(s.apply(&[1.0]), Err(Error::State(_))));
    let mut s = MinMaxScaler::new();
    s.fit(&[0.0, 4.0], 1).unwrap();
    assert_eq!(s.apply(&[1.0]).unwrap(), vec![0.25]);
}

proptest! {
    #[test]
    fn scaler_round_trip_and_training_extrema(
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..30)
    ) {
        let flat: Vec<f64> = rows.concat();
        let p = ScalerParams::fit(&flat, 3).unwrap();
        let mut scaled = flat.clone();
        p.apply_in_place(&mut scaled).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = scaled.iter().skip(j).step_by(3).copied().collect();
            if p.max[j] > p.min[j] {
                prop_assert_eq!(col.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
                prop_assert_eq!(col.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
            }
        }
        p.inverse_in_place(&mut scaled).unwrap();
        for (j, (a, b)) in scaled.iter().zip(&flat).enumerate() {
            if p.max[j % 3] > p.min[j % 3] {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn window_count_matches_enumeration(n in 0usize..400, w in 1usize..80, o in 0usize..80) {
        prop_assume!(o < w);
        let spec = WindowSpec::new(w, o).unwrap();
        let brute = (0..=n).filter(|s| s % spec.stride() == 0 && s + w <= n).count();
        prop_assert_eq!(window_count(n, spec), brute);
        prop_assert_eq!(sliding_windows(n, spec).len(), brute);
    }

    #[test]
    fn keypoints_translation_and_scale_invariant(
        seed in any::<u64>(), dx in -500.0f64..500.0, dy in -500.0f64..500.0,
        s in 0.1f64..10.0, px in -100.0f64..100.0, py in -100.0f64..100.0, drop_neck in any::<bool>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut k = random_skeleton(&mut rng, 300.0, 200.0);
        if drop_neck {
            k.joints[NECK] = Joint::default();
        }
        let base = normalize_keypoints(&k).unwrap();
        let mut moved = k.clone();
        for j in moved.joints.iter_mut().filter(|j| j.confident()) {
            j.x = px + s * (j.x - px) + dx;
            j.y = py + s * (j.y - py) + dy;
        }
        let out = normalize_keypoints(&moved).unwrap();
        for (a, b) in base.iter().zip(&out) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }
}

#[test]
fn window_examples() {
    assert_eq!(sliding_windows(100, WindowSpec::new(50, 30).unwrap()), vec![0, 20, 40]);
    assert_eq!(sliding_windows(60, WindowSpec::new(20, 10).unwrap()), vec![0, 10, 20, 30, 40]);
    assert_eq!(sliding_windows(50, WindowSpec::new(50, 10).unwrap()), vec![0]);
    assert!(sliding_windows(49, WindowSpec::new(50, 10).unwrap()).is_empty());
    assert!(WindowSpec::new(10, 10).is_err());
    assert_eq!(WindowSpec::profile("upfall").unwrap(), WindowSpec::new(50, 30).unwrap());
    assert_eq!(WindowSpec::profile("utd").unwrap(), WindowSpec::new(50, 10).unwrap());
    assert_eq!(WindowSpec::profile("berkeley").unwrap(), WindowSpec::new(50, 10).unwrap());
    assert_eq!(WindowSpec::profile("cmhad").unwrap(), WindowSpec::new(20, 10).unwrap());
    assert!(matches!(WindowSpec::profile("kitchen"), Err(Error::Config(_))));
}

#[test]
fn keypoint_hand_example() {
    let mut k = skeleton(|_| (10.0, 10.0));
    for j in &mut k.joints {
        *j = Joint::default();
    }
    k.joints[NECK] = Joint::new(10.0, 10.0, 1.0);
    k.joints[MID_HIP] = Joint::new(10.0, 30.0, 1.0);
    k.joints[4] = Joint::new(20.0, 10.0, 0.8);
    let out = normalize_keypoints(&k).unwrap();
    assert_eq!((out[8], out[9]), (0.5, 0.0));
    assert_eq!((out[2 * MID_HIP], out[2 * MID_HIP + 1]), (0.0, 1.0));
    assert_eq!((out[0], out[1]), (0.0, 0.0));
}

#[test]
fn keypoint_fallback_uses_bounding_box_diagonal() {
    let mut k = skeleton(|_| (0.0, 0.0));
    for j in &mut k.joints {
        *j = Joint::default();
    }
    k.joints[3] = Joint::new(0.0, 0.0, 1.0);
    k.joints[4] = Joint::new(3.0, 4.0, 1.0);
    let out = normalize_keypoints(&k).unwrap();
    // box center (1.5, 2), diagonal 5
    assert_eq!((out[6], out[7]), (-0.3, -0.4));
    assert_eq!((out[8], out[9]), (0.3, 0.4));
}

#[test]
fn invalid_frames_are_forward_filled() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_skeleton(&mut rng, 100.0, 100.0);
    let b = random_skeleton(&mut rng, 100.0, 100.0);
    let mut empty = a.clone();
    empty.joints.iter_mut().for_each(|j| *j = Joint::default());
    assert!(normalize_keypoints(&empty).is_none());
    let seq = normalize_sequence(&[empty.clone(), a.clone(), empty.clone(), b.clone()]).unwrap();
    let (na, nb) = (normalize_keypoints(&a).unwrap(), normalize_keypoints(&b).unwrap());
    assert_eq!(seq, vec![na.clone(), na.clone(), na, nb]);
    assert!(matches!(normalize_sequence(&[empty]), Err(Error::Validation(_))));
}

#[test]
fn tracker_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let centered = random_skeleton(&mut rng, 320.0, 240.0);
    let edge = random_skeleton(&mut rng, 40.0, 240.0);

    let mut st = TrackerState::new(640.0, 480.0);
    assert_eq!(select_subject(std::slice::from_ref(&centered), &mut st).unwrap(), 0);
    assert!(st.locked);

    let mut st = TrackerState::new(640.0, 480.0);
    assert_eq!(select_subject(&[edge.clone(), centered.clone()], &mut st).unwrap(), 1);
    assert!(st.locked);

    let mut st = TrackerState::new(640.0, 480.0);
    assert_eq!(select_subject(std::slice::from_ref(&edge), &mut st).unwrap(), 0);
    assert!(!st.locked);

    assert!(select_subject(&[], &mut st).is_err());
}

fn shifted(k: &KeypointFrame, dx: f64, dy: f64) -> KeypointFrame {
    let mut out = k.clone();
    for j in out.joints.iter_mut().filter(|j| j.confident()) {
        j.x += dx;
        j.y += dy;
    }
    out
}

#[test]
fn tracker_follows_small_motion_over_distractor() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_skeleton(&mut rng, 320.0, 240.0);
    let mut st = TrackerState::new(640.0, 480.0);
    select_subject(std::slice::from_ref(&a), &mut st).unwrap();
    let a2 = shifted(&a, 3.0, 4.0);
    let b = shifted(&a, 80.0, 0.0);
    // brute-force mean distances to the last pick: 5 for A and 80 for B
    let mean_dist = |k: &KeypointFrame| {
        let d: Vec<f64> = k
            .joints
            .iter()
            .zip(&a.joints)
            .filter(|(p, q)| p.confident() && q.confident())
            .map(|(p, q)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt())
            .collect();
        d.iter().sum::<f64>() / d.len() as f64
    };
    assert!((mean_dist(&a2) - 5.0).abs() < 1e-12 && (mean_dist(&b) - 80.0).abs() < 1e-12);
    assert_eq!(select_subject(&[b, a2.clone()], &mut st).unwrap(), 1);
    assert_eq!(st.last_keypoints, Some(a2));
}

#[test]
fn tracker_never_switches_under_small_displacement() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let mut subject = random_skeleton(&mut rng, 320.0, 240.0);
        let mut st = TrackerState::new(640.0, 480.0);
        select_subject(&[subject.clone()], &mut st).unwrap();
        for _ in 0..30 {
            let step = rng.gen_range(0.0..10.0);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let next = shifted(&subject, step * angle.cos(), step * angle.sin());
            // distractor strictly more than twice the step away from the last pose
            let far = rng.gen_range(2.0 * step + 1.0..200.0);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let distractor = shifted(&subject, far * angle.cos(), far * angle.sin());
            let slot = rng.gen_range(0..2);
            let cands = if slot == 0 {
                vec![next.clone(), distractor]
            } else {
                vec![distractor, next.clone()]
            };
            assert_eq!(select_subject(&cands, &mut st).unwrap(), slot);
            subject = next;
        }
    }
}

fn series(kind: SeriesKind, ts: Vec<f64>, rows: Vec<Vec<f64>>) -> TimeSeries {
    TimeSeries::new(kind, ts, rows).unwrap()
}

#[test]
fn resample_identity_at_target_rate() {
    let ts: Vec<f64> = (0..10).map(|k| k as f64 / 15.0).collect();
    let rows: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64 * 1.7, -(k as f64)]).collect();
    let s = series(SeriesKind::Plain, ts, rows);
    let out = resample_to_common_rate(std::slice::from_ref(&s), 15.0).unwrap();
    assert_eq!(out[0].rows, s.rows);
    for (a, b) in out[0].timestamps.iter().zip(&s.timestamps) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn resample_inertial_onto_video_grid() {
    let imu_ts: Vec<f64> = (0..101).map(|k| 0.013 + k as f64 / 50.0).collect();
    let f = |t: f64| (3.0 * t).sin() + t * t;
    let imu = series(SeriesKind::Plain, imu_ts.clone(), imu_ts.iter().map(|&t| vec![f(t)]).collect());
    let vid_ts: Vec<f64> = (0..31).map(|k| k as f64 / 15.0).collect();
    let vid = series(SeriesKind::Plain, vid_ts.clone(), vid_ts.iter().map(|&t| vec![t]).collect());
    let out = resample_to_common_rate(&[vid, imu], 15.0).unwrap();
    let grid = &out[1].timestamps;
    assert_eq!(grid[0], 0.013);
    assert!(*grid.last().unwrap() <= 2.0 + 1e-9);
    assert_eq!(grid.len(), ((2.0 - 0.013) * 15.0f64).floor() as usize + 1);
    for (&t, row) in grid.iter().zip(&out[1].rows) {
        // closed-form interpolation between the bracketing 50 Hz samples
        let k = ((t - 0.013) * 50.0 + 1e-9).floor() as usize;
        let (t0, t1) = (imu_ts[k], imu_ts[(k + 1).min(100)]);
        let expected = if t1 > t0 { f(t0) + (t - t0) / (t1 - t0) * (f(t1) - f(t0)) } else { f(t0) };
        assert!((row[0] - expected).abs() < 1e-9, "t={t}");
    }
}

#[test]
fn resample_reproduces_linear_ramps() {
    let ts: Vec<f64> = (0..40).map(|k| k as f64 * 0.021).collect();
    let s = series(SeriesKind::Plain, ts.clone(), ts.iter().map(|&t| vec![2.5 * t - 1.0]).collect());
    for hz in [3.0, 7.5, 11.0, 40.0] {
        let out = resample_to_common_rate(std::slice::from_ref(&s), hz).unwrap();
        for (&t, r) in out[0].timestamps.iter().zip(&out[0].rows) {
            assert!((r[0] - (2.5 * t - 1.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn resample_propagates_missing_joints() {
    let mut a = vec![0.0; 3 * JOINTS];
    let mut b = vec![0.0; 3 * JOINTS];
    for j in 0..JOINTS {
        a[3 * j..3 * j + 3].copy_from_slice(&[1.0, 2.0, 1.0]);
        b[3 * j..3 * j + 3].copy_from_slice(&[3.0, 4.0, 0.5]);
    }
    b[3 * 7..3 * 7 + 3].fill(0.0);
    let s = series(SeriesKind::Keypoints, vec![0.0, 1.0], vec![a, b]);
    // a second stream starting at 0.5 s puts the first grid point mid-way
    let other = series(SeriesKind::Plain, vec![0.5, 1.5], vec![vec![0.0], vec![1.0]]);
    let out = resample_to_common_rate(&[s, other], 1.0).unwrap();
    let mid = &out[0].rows[0];
    assert_eq!(&mid[0..3], &[2.0, 3.0, 0.75]);
    assert_eq!(&mid[21..24], &[0.0, 0.0, 0.0]);
}

#[test]
fn resample_errors() {
    let a = series(SeriesKind::Plain, vec![0.0, 1.0], vec![vec![0.0], vec![1.0]]);
    let b = series(SeriesKind::Plain, vec![2.0, 3.0], vec![vec![0.0], vec![1.0]]);
    assert!(matches!(resample_to_common_rate(&[a.clone(), b], 1.0), Err(Error::Sync(_))));
    let one = series(SeriesKind::Plain, vec![0.0], vec![vec![0.0]]);
    assert!(matches!(resample_to_common_rate(&[one], 1.0), Err(Error::Sync(_))));
    assert!(matches!(resample_to_common_rate(&[a], 5.0), Err(Error::Config(_))));
    assert!(TimeSeries::new(SeriesKind::Plain, vec![0.0, 0.0], vec![vec![0.0], vec![1.0]]).is_err());
}

#[test]
fn split_examples() {
    let spec = SplitSpec::default();
    let s = split_dataset(&vec![0; 100], 1, &spec).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (65, 10, 25));
    let s = split_dataset(&[0; 20], 1, &spec).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (13, 2, 5));
    assert_eq!(split_dataset(&[0; 20], 1, &spec).unwrap(), s);
    assert!(matches!(split_dataset(&[0, 0, 2], 3, &spec), Err(Error::Config(_))));
}

#[test]
fn split_counts_match_largest_remainder_by_hand() {
    let spec = SplitSpec::default();
    // 7 items: quotas 4.55, 0.7, 1.75 -> floors 4, 0, 1 -> remainders .55 .7 .75
    assert_eq!(spec.counts(7), [4, 1, 2]);
    // 3 items: quotas 1.95, 0.3, 0.75 -> floors 1, 0, 0 -> +1 test, +1 train
    assert_eq!(spec.counts(3), [2, 0, 1]);
    let s = split_dataset(&[0, 0, 0], 1, &spec).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1, 1, 1));
}

proptest! {
    #[test]
    fn split_is_a_stratified_partition(
        labels in prop::collection::vec(0usize..4, 12..200), seed in any::<u64>()
    ) {
        let counts: Vec<usize> = (0..4).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
        prop_assume!(counts.iter().all(|&c| c > 0));
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        let s = split_dataset(&labels, 4, &spec).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for c in 0..4 {
            if counts[c] >= 3 {
                for part in [&s.train, &s.val, &s.test] {
                    prop_assert!(part.iter().any(|&i| labels[i] == c));
                }
            }
        }
        prop_assert_eq!(split_dataset(&labels, 4, &spec).unwrap(), s);
    }
}

fn pose_frame(t: f64, cx: f64, phase: f64) -> KeypointFrame {
    let joints = (0..JOINTS)
        .map(|j| Joint::new(cx + 10.0 * ((j as f64) + phase).sin(), 200.0 + 8.0 * j as f64, 1.0))
        .collect();
    KeypointFrame::new(t, joints).unwrap()
}

fn toy_sequences(n: usize) -> Vec<LabeledSequence> {
    (0..n)
        .map(|i| LabeledSequence {
            id: format!("s{i}"),
            class_id: i % 2,
            pose: (0..30)
                .map(|k| {
                    let t = k as f64 / 15.0;
                    vec![pose_frame(t, 60.0, t), pose_frame(t, 320.0, t * (1.0 + i as f64))]
                })
                .collect(),
            inertial: (0..100)
                .map(|k| {
                    let t = k as f64 / 50.0;
                    InertialSample {
                        timestamp: t,
                        channels: vec![t * i as f64, 1.0, -t, 0.0, 0.5, t * t],
                    }
                })
                .collect(),
        })
        .collect()
}

#[test]
fn build_windows_aligns_streams() {
    let seqs = toy_sequences(4);
    let spec = WindowSpec::new(20, 10).unwrap();
    let data = build_windows(&seqs, spec, None, (640.0, 480.0)).unwrap();
    assert_eq!(data.rate_hz, 15.0);
    // 30 frames at 15 Hz span 1.933 s, inside the 1.98 s inertial span, so
    // each sequence keeps 30 grid points and yields windows at 0 and 10
    assert_eq!(data.len(), 8);
    assert_eq!(data.vision.shape(), &[8, 20, POSE_FEATURES]);
    assert_eq!(data.inertial.shape(), &[8, 20, 6]);
    assert_eq!(data.labels, vec![0, 0, 1, 1, 0, 0, 1, 1]);
    // the centred person is tracked, and its neck lands at the origin
    assert_eq!(data.vision.at(&[3, 3, 2 * NECK]), 0.0);
    let t = 13.0 / 15.0;
    let expected = normalize_keypoints(&pose_frame(t, 320.0, t * 2.0)).unwrap();
    for (k, e) in expected.iter().enumerate() {
        assert!((data.vision.at(&[3, 3, k]) - e).abs() < 1e-9);
    }
    // inertial channel 2 is -t on the 15 Hz grid
    assert!((data.inertial.at(&[5, 9, 2]) + 19.0 / 15.0).abs() < 1e-12);
}

#[test]
fn prepare_splits_scales_by_training_extrema() {
    let seqs = toy_sequences(40);
    let data = build_windows(&seqs, WindowSpec::new(10, 0).unwrap(), None, (640.0, 480.0)).unwrap();
    let prep = prepare_splits(&data, 2, &SplitSpec::default()).unwrap();
    assert_eq!(prep.train.len() + prep.val.len() + prep.test.len(), data.len());
    for j in 0..6 {
        let col: Vec<f64> = prep.train.inertial.data().iter().skip(j).step_by(6).copied().collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if prep.inertial_scaler.max[j] > prep.inertial_scaler.min[j] {
            assert_eq!((lo, hi), (0.0, 1.0));
        } else {
            assert_eq!((lo, hi), (0.0, 0.0));
        }
    }
}
