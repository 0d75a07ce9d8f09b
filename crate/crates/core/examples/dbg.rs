use ssp_lmm::optimize::*;
use ssp_lmm::method::Family;

fn main() {
    for (k, p, y) in [(2usize, 2usize, 1.0f64), (2, 2, 4.0), (6, 4, 1.0)] {
        let res = optimal_method(Family::Perturbed, k, p, y, true).unwrap().unwrap();
        println!("(k={k},p={p},y={y}): r={:.12} gap={:.2e} count={} bound_ok={}",
            res.r(), res.bisection_gap, res.nonzero_count, verify_nonzero_bound(&res));
        println!("  gamma = {:?}", res.certificate.gamma);
        println!("  beta  = {:?}", res.method.beta());
        println!("  beta~ = {:?}", res.method.beta_second());
    }
}
