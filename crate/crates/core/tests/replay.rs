mod common;

use std::collections::HashSet;

use common::stream;
use mhol::stream::{advance_batch, day_of, DailyPartitions, Partition, TrainRecord};
use mhol::{DelayWindows, GlmKind, MultiHeadModel, StreamState, TrainConfig, DAY};

fn paper_windows() -> DelayWindows {
    DelayWindows::from_days(&[1, 2, 5, 12, 30]).unwrap()
}

#[test]
fn full_replay_consumes_every_click_once_per_head() {
    let s = stream(10_000, 40, 30, 0.0, 11);
    let windows = paper_windows();
    let mut mh = MultiHeadModel::new(GlmKind::Logistic, 12, windows.clone()).unwrap();
    let mut st = StreamState::new(5).with_trace();
    let cfg = TrainConfig::default();
    let end = s.log.last_ts().unwrap() + windows.full_window();
    let mut clock = 0;
    while clock < end {
        clock = (clock + 6 * 3600).min(end);
        st.advance(&s.log, &s.store, &mut mh, &cfg, clock).unwrap();
    }
    assert!(st.consumed().iter().all(|&c| c == 10_000));
    assert!(st.cursors().iter().all(|&c| c == 10_000));
    let trace = st.take_trace().unwrap();
    for (head, events) in trace.iter().enumerate() {
        let ids: HashSet<&str> = events.iter().map(|e| e.click_id.as_str()).collect();
        assert_eq!(ids.len(), 10_000, "head {head} trained a click twice");
        for e in events {
            // Labels seen by the simulator are exactly the quantized labels.
            let q = s.store.labels(&e.click_id, &windows).unwrap();
            assert_eq!(e.label, q.label(head, GlmKind::Logistic));
            assert!(e.at >= e.click_ts + windows.wait(head));
        }
    }
    // Every conversion became exactly one positive across the heads.
    let positives: usize = trace.iter().flatten().filter(|e| e.label == 1.0).count();
    assert_eq!(positives, s.store.len());
}

#[test]
fn head_one_lag_is_bounded_by_its_wait_plus_one_step() {
    let s = stream(5_000, 10, 5, 0.0, 12);
    let windows = DelayWindows::from_days(&[1, 3, 5]).unwrap();
    let mut mh = MultiHeadModel::new(GlmKind::Linear, 12, windows.clone()).unwrap();
    let mut st = StreamState::new(3).with_trace();
    let step = 3600;
    let end = s.log.last_ts().unwrap() + windows.full_window() + step;
    for clock in (step..=end).step_by(step as usize) {
        st.advance(&s.log, &s.store, &mut mh, &TrainConfig::default(), clock).unwrap();
    }
    let trace = st.take_trace().unwrap();
    let t1 = windows.wait(0);
    assert_eq!(trace[0].len(), 5_000);
    for e in &trace[0] {
        let lag = e.at - e.click_ts;
        assert!(lag >= t1 && lag <= t1 + step, "lag {lag}");
    }
}

fn multiset(events: &[TrainRecord<f64>]) -> Vec<(usize, String, u64)> {
    let mut v: Vec<_> = events.iter().map(|e| (e.head, e.click_id.clone(), e.label.to_bits())).collect();
    v.sort();
    v
}

#[test]
fn batch_and_streaming_train_on_the_same_pairs() {
    for kind in [GlmKind::Logistic, GlmKind::Linear] {
        let s = stream(6_000, 20, 6, 0.01, 13);
        let windows = DelayWindows::from_days(&[1, 3, 6]).unwrap();
        let cfg = TrainConfig::default();
        let first = day_of(s.log.first_ts().unwrap());
        let last = day_of(s.log.last_ts().unwrap()) + 6;

        let mut streaming = MultiHeadModel::new(kind, 12, windows.clone()).unwrap();
        let mut st = StreamState::new(3).with_trace();
        for day in first..=last {
            st.advance(&s.log, &s.store, &mut streaming, &cfg, (day + 1) as u64 * DAY).unwrap();
        }
        let stream_events: Vec<_> = st.take_trace().unwrap().into_iter().flatten().collect();

        let mut parts = DailyPartitions::from_log(&s.log, &s.store);
        for day in first..=last {
            if parts.get(day).is_none() {
                parts.insert(day, Partition::default());
            }
        }
        let mut batch = MultiHeadModel::new(kind, 12, windows.clone()).unwrap();
        let mut batch_events = Vec::new();
        for day in first..=last {
            advance_batch(day, &parts, &mut batch, &cfg, Some(&mut batch_events)).unwrap();
        }

        assert_eq!(stream_events.len(), 3 * 6_000);
        assert_eq!(multiset(&stream_events), multiset(&batch_events));
        // Each head sees its clicks in log order either way, so the models agree too.
        assert_eq!(streaming, batch);
    }
}

#[test]
fn batch_reports_missing_overflow_partition() {
    let s = stream(2_000, 10, 6, 0.0, 14);
    let windows = DelayWindows::from_days(&[1, 3, 6]).unwrap();
    let full = DailyPartitions::from_log(&s.log, &s.store);
    let last = day_of(s.log.last_ts().unwrap());
    let mut parts = DailyPartitions::new(full.first_day());
    for day in full.days().filter(|&d| d != last + 1) {
        parts.insert(day, full.get(day).unwrap().clone());
    }
    let mut mh = MultiHeadModel::new(GlmKind::Logistic, 12, windows).unwrap();
    // Head one's day-`last` clicks need the partition after it.
    let err = advance_batch(last + 1, &parts, &mut mh, &TrainConfig::default(), None).unwrap_err();
    assert!(matches!(err, mhol::Error::MissingPartitions { ref days } if days == &vec![last + 1]));
    assert_eq!(err.exit_code(), 3);
}
