use transec_core::experiment::DetectorParams;
use transec_core::gp::{self, alarms_from_scores, GpModel};
use transec_core::sim::{self, SignalSchedule, SimConfig};

fn short() -> DetectorParams {
    DetectorParams {
        train_hours: 72.0,
        test_hours: 24.0,
        attacked_hours: 4.0,
        seed: 21,
        ..DetectorParams::default()
    }
}

#[test]
fn threshold_sweep_is_monotone() {
    let d = short();
    let model = d.trained_model().unwrap();
    let attacked = d.attacked_trace(0.1).unwrap();
    let scores = model.score(&attacked).unwrap();
    let all: Vec<f64> = scores.iter().map(|w| w.log_likelihood).collect();
    let grid = gp::threshold_grid(&all, 40);
    let mut prev_fp = 0;
    let mut prev_delay = f64::INFINITY;
    for &tau in &grid {
        let r = alarms_from_scores(&scores, tau, Some(d.onset_s));
        assert!(r.fp_count >= prev_fp);
        let delay = r.delay_minutes.unwrap_or(f64::INFINITY);
        assert!(delay <= prev_delay);
        prev_fp = r.fp_count;
        prev_delay = delay;
    }
}

#[test]
fn zero_false_positive_threshold_is_silent_on_normal_traffic() {
    let d = short();
    let model = d.trained_model().unwrap();
    let normal = d.held_out_trace().unwrap();
    let tau = gp::zero_fp_threshold(&model, &normal).unwrap();
    assert_eq!(model.detect(&normal, tau, None).unwrap().fp_count, 0);
    let report = model.detect(&d.attacked_trace(0.25).unwrap(), tau, Some(d.onset_s)).unwrap();
    assert!(report.delay_minutes.is_some(), "a 25% tamper should be caught");
}

#[test]
fn pareto_curve_is_sorted_and_non_increasing() {
    let d = short();
    let model = d.trained_model().unwrap();
    let normal = d.held_out_trace().unwrap();
    let attacked = d.attacked_trace(0.044).unwrap();
    let all: Vec<f64> = model
        .score(&normal)
        .unwrap()
        .iter()
        .chain(&model.score(&attacked).unwrap())
        .map(|w| w.log_likelihood)
        .collect();
    let curve = gp::pareto_curve(&model, &normal, &attacked, d.onset_s, &gp::threshold_grid(&all, 50)).unwrap();
    assert!(!curve.is_empty());
    for w in curve.windows(2) {
        assert!(w[1].fp_per_month >= w[0].fp_per_month);
        assert!(w[1].delay_minutes <= w[0].delay_minutes);
    }
}

#[test]
fn model_file_round_trip_and_sensor_order() {
    let d = short();
    let model = gp::train(&d.training_trace().unwrap(), d.period().unwrap()).unwrap();
    let mut buf = Vec::new();
    model.write_json(&mut buf).unwrap();
    let back = GpModel::read_json(buf.as_slice()).unwrap();
    assert_eq!(back, model);

    let trace = d.held_out_trace().unwrap();
    let a = model.prepare().unwrap();
    let order: Vec<usize> = (0..model.sensors.len()).rev().collect();
    let b = model.reorder(&order).prepare().unwrap();
    let mut reordered = trace.clone();
    reordered.sensors = order.iter().map(|&i| trace.sensors[i].clone()).collect();
    for row in &mut reordered.values {
        *row = order.iter().map(|&i| row[i]).collect();
    }
    for (x, y) in a.score(&trace).unwrap().iter().zip(b.score(&reordered).unwrap()) {
        assert!((x.log_likelihood - y.log_likelihood).abs() <= 1e-6 * x.log_likelihood.abs().max(1.0));
    }
}

#[test]
fn simulated_traces_round_trip_through_csv() {
    let t = sim::simulate(&SignalSchedule::default(), &Default::default(), &SimConfig::new(3600.0, 5)).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let back = transec_core::trace::TrafficTrace::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, t);
    assert_eq!(t.len(), 240);
}
