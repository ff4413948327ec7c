use proptest::prelude::*;
use rowtsm_core::eval::{
    epsilon, parse_appendix, reproduce_appendix_a, settling_time, suggest_bc, suggest_threshold,
    EvalRecord, APPENDIX_A_CSV, APPENDIX_DLX2_MAX, APPENDIX_DTHETA_MAX,
};
use rowtsm_core::sim::{FrameRecord, Termination, TrialTrace};

fn records() -> impl Strategy<Value = Vec<EvalRecord>> {
    prop::collection::vec((0.0f64..8.0, 0.0f64..120.0), 1..40).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (t, l))| EvalRecord {
                image_id: format!("{i}"),
                dtheta_abs: t,
                dlx2_abs: l,
                category: None,
            })
            .collect()
    })
}

fn trace(thetas: &[f64]) -> TrialTrace {
    TrialTrace {
        records: thetas
            .iter()
            .enumerate()
            .map(|(i, &t)| FrameRecord {
                frame: i,
                theta_world_deg: t,
                lateral_m: 0.0,
                theta_img_deg: 0.0,
                dlx2_px: 0.0,
                omega: 0.0,
            })
            .collect(),
        terminated: Termination::EndOfRow,
        max_frames: 300,
        row_index: 0,
    }
}

proptest! {
    #[test]
    fn epsilon_ignores_order_and_duplication(recs in records(), rot in 0usize..40) {
        let e = epsilon(&recs, 8.23, 126.74).unwrap().epsilon;
        let mut rotated = recs.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        prop_assert!((epsilon(&rotated, 8.23, 126.74).unwrap().epsilon - e).abs() < 1e-12);
        let doubled: Vec<_> = recs.iter().chain(recs.iter()).cloned().collect();
        prop_assert!((epsilon(&doubled, 8.23, 126.74).unwrap().epsilon - e).abs() < 1e-12);
    }

    #[test]
    fn epsilon_drops_when_an_error_grows(recs in records(), i in 0usize..40, bump in 0.01f64..5.0) {
        let e = epsilon(&recs, 8.23, 126.74).unwrap().epsilon;
        let mut worse = recs.clone();
        let k = i % worse.len();
        worse[k].dtheta_abs += bump;
        prop_assert!(epsilon(&worse, 8.23, 126.74).unwrap().epsilon < e);
    }

    #[test]
    fn bc_brackets_every_retained_value(vals in prop::collection::vec(150i64..370, 5..400)) {
        if let Ok(s) = suggest_bc(&vals, 5) {
            for (col, n) in &s.histogram {
                if *n >= 5 {
                    prop_assert!(s.begin <= *col && *col <= s.cease);
                }
            }
            // one more value in band never narrows the range
            let mut more = vals.clone();
            more.push(s.begin);
            let t = suggest_bc(&more, 5).unwrap();
            prop_assert!(t.begin <= s.begin && t.cease >= s.cease);
        }
    }

    #[test]
    fn threshold_is_order_free_minimum(mut r in prop::collection::vec(0.0f64..1.0, 1..50)) {
        let m = suggest_threshold(&r).unwrap();
        prop_assert_eq!(m, r.iter().cloned().fold(f64::INFINITY, f64::min));
        r.reverse();
        prop_assert_eq!(suggest_threshold(&r).unwrap(), m);
    }

    #[test]
    fn narrower_band_never_settles_sooner(th in prop::collection::vec(-20.0f64..20.0, 1..80), b in 0.5f64..5.0) {
        let t = trace(&th);
        let wide = settling_time(&t, b);
        let narrow = settling_time(&t, b / 2.0);
        prop_assert!(narrow >= wide);
        prop_assert!(wide <= t.records.len() || wide == t.max_frames + 1);
    }
}

#[test]
fn linear_decay_settles_where_it_crosses_the_band() {
    // 20 degrees falling 0.8 per frame: 20 - 0.8 * 23 = 1.6 is the first value <= 2
    let th: Vec<f64> = (0..60).map(|i| 20.0 - 0.8 * i as f64).collect();
    assert_eq!(settling_time(&trace(&th), 2.0), 23);
    assert_eq!(settling_time(&trace(&[5.0; 10]), 2.0), 301);
}

#[test]
fn fig22_shaped_distribution_recovers_reference_b_and_c() {
    let mut vals = Vec::new();
    for c in 190..=350 {
        vals.extend(std::iter::repeat_n(c, 5 + (c as usize % 7)));
    }
    vals.extend([120, 120, 121, 400]);
    let s = suggest_bc(&vals, 5).unwrap();
    assert_eq!((s.begin, s.cease), (190, 350));
}

#[test]
fn appendix_rows_reproduce_from_class_means() {
    let rows = parse_appendix(APPENDIX_A_CSV).unwrap();
    assert_eq!(rows.iter().filter(|r| !r.is_average()).count(), 43);
    let res = reproduce_appendix_a(&rows, APPENDIX_DTHETA_MAX, APPENDIX_DLX2_MAX).unwrap();
    for r in res.iter().filter(|r| !r.is_average()) {
        assert!(r.eps_ok() && r.eps_b_ok(), "{r:?}");
    }
}
