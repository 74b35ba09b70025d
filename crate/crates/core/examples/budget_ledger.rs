//! How an engine's privacy budget is split, printed from its ledger.

use cdpk::pipeline::{Engine, PipelineConfig};

fn main() {
    for nmax in [Some(32), None] {
        let cfg = PipelineConfig { k: 2, nmax, t_max: Some(50), copies: Some(2), ..Default::default() };
        let e = Engine::new(cfg, 2).unwrap();
        let l = e.ledger();
        l.verify().unwrap();
        println!("nmax={nmax:?}: spent {:.6} of {}", l.mechanism_total(), l.root_epsilon());
        for entry in l.entries().iter().filter(|e| e.path.matches('/').count() <= 3) {
            println!("  {:<40} {:?} {:.6}", entry.path, entry.kind, entry.epsilon);
        }
    }
}
