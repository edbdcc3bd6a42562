// One-off high-volume stress of the three-agent pipeline across value
// shapes: tie-heavy, zero-heavy, wide, and fractional instances.
use rand::Rng; use rand::SeedableRng; use rand_chacha::ChaCha8Rng;
use fairdiv_core::{mech_three, marginals, Instance, fairness};
use fairdiv_core::numeric::rat;
fn main() {
    let total: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF2);
    for trial in 0..total {
        let m = rng.gen_range(1..=14usize);
        let inst = Instance::new((0..3).map(|_| (0..m).map(|_| match trial % 5 {
            0 => rat(rng.gen_range(0..2), 1),          // near-binary, extreme ties
            1 => rat(rng.gen_range(0..3), 1),          // tie-heavy
            2 => rat(rng.gen_range(0..30), 1),         // wide
            3 => rat(rng.gen_range(0..8), rng.gen_range(1..5)), // fractional
            _ => if rng.gen_bool(0.4) { rat(0,1) } else { rat(rng.gen_range(1..6), 1) }, // zero-heavy
        }).collect()).collect()).unwrap();
        let lot = match mech_three::run(&inst) { Ok(l) => l, Err(e) => panic!("run failed on {inst:?}: {e}") };
        assert_eq!(marginals(&lot).unwrap(),
            mech_three::fractional_rule(&inst, mech_three::TieBreaking::Careful).unwrap(),
            "marginals drift on {inst:?}");
        for entry in &lot.entries {
            assert!(fairness::check_ef_uv(&inst, &entry.allocation(), 1, 1).unwrap().satisfied,
                "EF budget broken on {inst:?} entry {entry:?}");
        }
        if trial % 10000 == 0 { eprintln!("{trial} ok"); }
    }
    eprintln!("{total} instances clean");
}
