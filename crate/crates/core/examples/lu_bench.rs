use std::sync::Arc;
use std::time::Instant;
use sch_core::mesh::build_uniform_mesh;
use sch_core::sparse::{SparsityPattern, SymbolicLu, SparseLu};
fn main() {
    for n in [16usize, 32, 64] {
        let m = build_uniform_mesh(n).unwrap();
        let pat = Arc::new(SparsityPattern::from_rows(m.vertex_adjacency()).unwrap());
        let t = Instant::now();
        let sym = Arc::new(SymbolicLu::analyse(pat.clone(), &m.nested_dissection_order()).unwrap());
        let ts = t.elapsed();
        let mut vals = Vec::new();
        for i in 0..pat.dim() { for p in pat.row_range(i) { let j = pat.col(p);
            let d = if i==j {4.0} else {-0.5}; let mm = if i==j {0.01} else {0.002};
            vals.push([[mm + 0.001*d, 1e-4*d],[-0.1*d+0.3*mm, mm]]); } }
        let reps = 50;
        let t = Instant::now();
        for _ in 0..reps { let lu = SparseLu::<2>::factor(sym.clone(), &vals).unwrap(); std::hint::black_box(&lu); }
        let tf = t.elapsed()/reps;
        let lu = SparseLu::<2>::factor(sym.clone(), &vals).unwrap();
        let b = vec![[1.0,2.0]; pat.dim()];
        let t = Instant::now();
        for _ in 0..reps { std::hint::black_box(lu.solve(&b).unwrap()); }
        println!("n={n} symbolic {ts:?} factor {tf:?} solve {:?} fill {}", t.elapsed()/reps, sym.factor_nnz());
    }
}
