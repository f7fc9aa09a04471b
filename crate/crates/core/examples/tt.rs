use std::time::Instant;
use permqmc::*;
fn main() {
    let t = Instant::now();
    let w = weights::SpectralWeight::sobolev(1.0).unwrap();
    eprintln!("weight {:?}", t.elapsed());
    let ps = perm::PermStructure::full(3).unwrap();
    let mut cfg = config::ExperimentConfig::new(w, ps);
    cfg.params.n = vec![31];
    eprintln!("cfg {:?}", t.elapsed());
    cfg.validate().unwrap();
    eprintln!("validate {:?}", t.elapsed());
}
