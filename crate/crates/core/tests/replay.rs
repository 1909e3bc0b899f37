use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slbag::algorithms::{AlgorithmId, ChooserPolicy};
use slbag::sim::{replay, replay_trace, Bounds, Sim, Trace, Workload};
use slbag::slcheck::{counterexample_fixtures, SlWitness};
use slbag::Error;

fn random_trace(w: Workload, seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = Bounds::default();
    let mut sim = Sim::new(Arc::new(w)).unwrap();
    loop {
        let enabled = sim.enabled(&bounds);
        if enabled.is_empty() {
            break;
        }
        sim.step(enabled[rng.gen_range(0..enabled.len())]).unwrap();
    }
    sim.into_trace()
}

fn cases() -> Vec<Workload> {
    let parse = |alg, n, b, chooser, text| Workload::parse(alg, n, b, chooser, text).unwrap();
    vec![
        parse(
            AlgorithmId::LiQueue,
            3,
            1,
            ChooserPolicy::Smallest,
            "p0:I1,T;p1:I2;p2:T,T",
        ),
        parse(
            AlgorithmId::UnboundedSl,
            3,
            1,
            ChooserPolicy::Smallest,
            "p0:I1,I2;p1:T;p2:T",
        ),
        parse(AlgorithmId::Wf1b, 2, 1, ChooserPolicy::Random(4), "p0:I1,I2;p1:T;p2:T"),
        parse(AlgorithmId::Sl1b, 2, 1, ChooserPolicy::Smallest, "p0:I1,I2;p1:T;p2:T"),
        parse(
            AlgorithmId::SlBb,
            2,
            2,
            ChooserPolicy::Scripted(vec![1, 0, 1]),
            "p0:I1,I2,I3;p1:T;p2:T",
        ),
    ]
}

#[test]
fn text_round_trip_reproduces_the_trace() {
    for (i, w) in cases().into_iter().enumerate() {
        for seed in 0..20 {
            let t = random_trace(w.clone(), seed * 31 + i as u64);
            let text = t.to_text();
            let again = replay(&text).unwrap();
            assert_eq!(again.to_text(), text);
            assert_eq!(Trace::parse(&text).unwrap().to_text(), text);
        }
    }
}

#[test]
fn tampered_response_diverges_at_its_seq() {
    let w = cases().remove(1);
    let t = random_trace(w, 5);
    let text = t.to_text();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // Flip the response of the first step that read an integer.
    let (idx, seq) = t
        .events
        .iter()
        .find_map(|e| e.response.to_string().parse::<i64>().ok().map(|_| (e.seq + 1, e.seq)))
        .expect("some integer read");
    let mut fields: Vec<String> = lines[idx].split(' ').map(str::to_string).collect();
    let last = fields.last_mut().unwrap();
    *last = (last.parse::<i64>().unwrap() + 7).to_string();
    lines[idx] = fields.join(" ");
    match replay(&lines.join("\n")) {
        Err(Error::Divergence { seq: s, .. }) => assert_eq!(s, seq),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn header_with_a_different_n_is_a_usage_error() {
    let w = cases().remove(1);
    let t = random_trace(w, 2);
    let mut recorded = t.clone();
    recorded.n = 1;
    assert!(matches!(replay_trace(&recorded), Err(Error::Usage(_))));
    let text = t.to_text().replacen("unbounded-sl 3 ", "unbounded-sl 1 ", 1);
    assert!(matches!(replay(&text), Err(Error::Usage(_))));
}

#[test]
fn misspelled_action_is_a_parse_error() {
    let w = cases().remove(0);
    let t = random_trace(w, 3);
    let text = t.to_text();
    let broken = text.replacen(" read ", " reed ", 1);
    assert!(matches!(replay(&broken), Err(Error::Parse { .. })));
}

#[test]
fn witnesses_round_trip_through_text() {
    for f in counterexample_fixtures().unwrap() {
        let w = f.witness().unwrap();
        let text = w.to_text().unwrap();
        let back = SlWitness::parse(&text).unwrap();
        assert_eq!(back.alpha, w.alpha);
        assert_eq!(back.branches, w.branches);
        assert_eq!(back.to_text().unwrap(), text);
        assert!(back.verify().unwrap());
    }
}
