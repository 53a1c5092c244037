use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treebridge::chain::{run_chain, ChainConfig, Event, Recorder};
use treebridge::data::{preprocess, DataMatrix, PreprocessOptions};
use treebridge::init::initial_state;
use treebridge::smc::{simulate_smc, ModelParams};

fn simulated(seed: u64, n: usize, s: usize, params: &ModelParams) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_smc(&mut rng, n, s, params).unwrap();
    preprocess(&sim.data.to_raw(), None, &PreprocessOptions::default()).unwrap()
}

#[test]
fn chain_on_simulated_data_keeps_invariants() {
    let params = ModelParams::new(0.01, 0.004).unwrap();
    for seed in 0..6 {
        let data = simulated(seed, 6, 1500, &params);
        if data.segregating().len() < 4 {
            continue;
        }
        let init = initial_state(&data).unwrap();
        assert!(init.is_compatible(&data));
        let mut config = ChainConfig::new(params);
        config.iterations = 1500;
        config.seed = seed;
        config.check_invariants = true;
        let mut rec = Recorder::default();
        let summary = run_chain(&data, &config, init, &mut rec).unwrap();
        assert!(summary.final_state.is_compatible(&data));
        let count = |e| rec.rows.iter().filter(|r| r.event == e).count();
        eprintln!(
            "seed {seed}: seg {} init {} final {} accept {} reject {} skip {} tacc {} trej {}",
            data.segregating().len(),
            rec.rows[0].n_recomb,
            summary.final_state.n_recombinations(),
            count(Event::Accept),
            count(Event::Reject),
            count(Event::Skip),
            count(Event::TimeAccept),
            count(Event::TimeReject)
        );
    }
}
