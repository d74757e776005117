mod common;

use common::{shared_archive, A, B, EMPTY};
use mfswarm::analysis::transition::transition_episode;
use mfswarm::{Bin, WorldConfig};
use mfswarm_steer::protocol::{Command, ErrorCode, Frame, ServerMessage};
use mfswarm_steer::{ClientMessage, Session, SessionOptions};

fn session(seed: u64, decimation: u64) -> Session {
    let options = SessionOptions { decimation, ..Default::default() };
    Session::new("s1", "test", shared_archive(), WorldConfig::default(), A, seed, options).unwrap()
}

fn switch(bin: Bin) -> ClientMessage {
    ClientMessage::SwitchBehavior { bin, id: None }
}

fn run(s: &mut Session, ticks: usize) -> Vec<ServerMessage> {
    (0..ticks).flat_map(|_| s.tick()).collect()
}

fn frames(msgs: &[ServerMessage]) -> Vec<Frame> {
    msgs.iter()
        .filter_map(|m| match m {
            ServerMessage::Frame(f) => Some(f.clone()),
            _ => None,
        })
        .collect()
}

#[test]
fn scripted_session_matches_batch_transition() {
    let archive = shared_archive();
    let (a, b) = (&archive.get(A).unwrap().genome, &archive.get(B).unwrap().genome);
    for seed in [3, 77, 1234] {
        let mut s = session(seed, 4);
        run(&mut s, 100);
        s.command(switch(B)).unwrap();
        run(&mut s, 100);
        let batch = transition_episode(&WorldConfig::default(), a, b, seed, 100, 100).unwrap();
        assert_eq!(s.world().agents(), &batch.agents[..], "seed {seed}");
        assert_eq!(s.world().predictions(), &batch.predictions[..]);
        assert_eq!(s.world().samples(), &batch.samples[..]);
        assert_eq!(s.world().clock(), batch.clock);
        assert_eq!(s.bin(), B);
    }
}

#[test]
fn identity_switch_only_adds_an_ack() {
    let mut plain = session(9, 1);
    let mut switched = session(9, 1);
    let mut base = run(&mut plain, 120);
    let mut other = run(&mut switched, 50);
    switched.command(switch(A)).unwrap();
    other.extend(run(&mut switched, 70));

    let acks: Vec<_> = other.iter().filter(|m| matches!(m, ServerMessage::Ack(_))).collect();
    assert_eq!(acks.len(), 1);
    let ServerMessage::Ack(ack) = acks[0] else { unreachable!() };
    assert_eq!((ack.command, ack.bin, ack.previous_bin, ack.steps), (Command::SwitchBehavior, A, Some(A), 50));

    let strip = |fs: Vec<Frame>| fs.into_iter().map(|f| Frame { seq: 0, ..f }).collect::<Vec<_>>();
    base.retain(|m| !matches!(m, ServerMessage::Ack(_)));
    assert_eq!(strip(frames(&base)), strip(frames(&other)));
    assert_eq!(plain.world().agents(), switched.world().agents());
}

#[test]
fn empty_cell_keeps_active_behavior() {
    let mut s = session(4, 4);
    run(&mut s, 10);
    let err = s.command(switch(EMPTY)).unwrap_err();
    assert_eq!(err.code, ErrorCode::EmptyCell);
    assert_eq!(err.message, "empty cell (4, 4, 4)");
    let err = s.command(switch(Bin::new(10, 0, 0))).unwrap_err();
    assert_eq!(err.code, ErrorCode::BinOutOfRange);
    assert!(err.message.contains("(10, 0, 0)"));
    run(&mut s, 10);
    assert_eq!(s.bin(), A);
    let mut reference = session(4, 4);
    run(&mut reference, 20);
    assert_eq!(s.world().agents(), reference.world().agents());
}

#[test]
fn sequence_numbers_strictly_increase() {
    let mut s = session(5, 3);
    let mut all = run(&mut s, 17);
    all.extend(s.command(ClientMessage::Pause { id: None }).unwrap());
    all.extend(run(&mut s, 5));
    all.extend(s.command(ClientMessage::SetRate { rate: 50.0, id: None }).unwrap());
    all.extend(s.command(ClientMessage::Step { count: 7, id: Some("k".into()) }).unwrap());
    s.command(switch(B)).unwrap();
    all.extend(s.command(ClientMessage::Resume { id: None }).unwrap());
    all.extend(run(&mut s, 20));
    let seqs: Vec<u64> = all.iter().map(|m| m.seq().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] > w[0]), "{seqs:?}");
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    assert_eq!(s.world().steps(), 17 + 7 + 20);
}

#[test]
fn snapshot_plus_deltas_rebuild_the_grid() {
    let mut s = session(6, 4);
    run(&mut s, 37);
    let snap = s.snapshot();
    assert_eq!(snap.seq, s.seq());
    let mut grid = snap.grid.counts.clone();
    let mut predictions = snap.predictions.clone();
    let later = run(&mut s, 39 + 80);
    for f in frames(&later) {
        assert!(f.seq > snap.seq);
        for (i, c) in f.grid_delta {
            grid[i] = c;
        }
        predictions.extend(f.new_predictions);
    }
    assert_eq!(s.world().steps() % 4, 0);
    assert_eq!(grid, s.world().grid().counts());
    assert_eq!(predictions, s.world().predictions());
}

#[test]
fn frames_carry_links_and_metrics() {
    let mut s = session(8, 1);
    let out = run(&mut s, 60);
    let last = frames(&out).pop().unwrap();
    let config = WorldConfig::default();
    assert_eq!(last.links, mfswarm::metrics::links(&last.positions, config.comm_radius));
    assert_eq!(last.prediction, s.world().predictions().last().copied());
    assert_eq!(last.metrics.network, s.world().network_now());
    assert_eq!(last.metrics.unique_cells, s.world().samples().last().unwrap().unique_cells);
    let wire = ServerMessage::Frame(last.clone()).to_json();
    assert_eq!(ServerMessage::from_json(&wire).unwrap(), ServerMessage::Frame(last));
}
