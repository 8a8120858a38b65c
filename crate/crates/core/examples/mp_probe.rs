//! Temporary probe for the saddle search: finite-difference check of the
//! deformation gradient, then a traced mountain-pass run.

use std::sync::Arc;
use std::time::Instant;

use pohozaev::field::RadialField;
use pohozaev::functionals::{CouplingParams, StatePair};
use pohozaev::grid::RadialGrid;
use pohozaev::scalar::scaling_oracle;
use pohozaev::system::path::build_endpoints;
use pohozaev::system::{j_covector, mountain_pass, tangent_project, SystemOptions};

fn fd_check() {
    let grid = Arc::new(RadialGrid::new(3, 16.0, 3001).unwrap());
    let params = CouplingParams::new(1.0, 1.0, -1.0, 1.5, 1.2).unwrap();
    let u1 = RadialField::from_fn(Arc::clone(&grid), |r| (-r * r).exp())
        .renormalized_to_mass(params.a1 * params.a1)
        .unwrap();
    let u2 = RadialField::from_fn(Arc::clone(&grid), |r| {
        r * r * (-(r - 3.0) * (r - 3.0)).exp()
    })
    .renormalized_to_mass(params.a2 * params.a2)
    .unwrap();
    let pair = StatePair::new(u1, u2, params).unwrap();
    let pair = pair.project().unwrap().pair;
    let cov = j_covector(&pair);
    let n = grid.len();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let c1 = 1.0 + 1.3 * k as f64 % 5.0;
        let c2 = 2.0 + 0.7 * k as f64 % 6.0;
        let w1 = 0.4 + 0.11 * (k as f64 % 3.0);
        let w2 = 0.6 + 0.07 * (k as f64 % 4.0);
        let mk = |c: f64, w: f64| -> Vec<f64> {
            let mut v: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|&r| (-(r - c) * (r - c) / (w * w)).exp())
                .collect();
            v[n - 1] = 0.0;
            v
        };
        let d1 = mk(c1, w1);
        let d2 = mk(c2, w2);
        let t = tangent_project(&pair, (&d1, &d2)).unwrap();
        let predicted: f64 = cov.0.iter().zip(&t.0).map(|(a, b)| a * b).sum::<f64>()
            + cov.1.iter().zip(&t.1).map(|(a, b)| a * b).sum::<f64>();
        let perturbed = |sign: f64| -> f64 {
            let v1: Vec<f64> = pair
                .u1()
                .values()
                .iter()
                .zip(&t.0)
                .map(|(u, d)| u + sign * h * d)
                .collect();
            let v2: Vec<f64> = pair
                .u2()
                .values()
                .iter()
                .zip(&t.1)
                .map(|(u, d)| u + sign * h * d)
                .collect();
            let p1 = RadialField::new(Arc::clone(&grid), v1).unwrap();
            let p2 = RadialField::new(Arc::clone(&grid), v2).unwrap();
            StatePair::new(p1, p2, params).unwrap().energy()
        };
        let fd = (perturbed(1.0) - perturbed(-1.0)) / (2.0 * h);
        let rel = (predicted - fd).abs() / fd.abs().max(1e-30);
        worst = worst.max(rel);
        println!(
            "dir {k:2}: predicted {predicted:+.9e}  fd {fd:+.9e}  rel {rel:.3e}"
        );
    }
    println!("worst rel {worst:.3e}");
}

fn main() {
    fd_check();

    let mut opts = SystemOptions::default();
    opts.scalar.theta = 0.05;
    let params = CouplingParams::new(1.0, 1.0, -2.0, 1.5, 1.2).unwrap();
    let l1 = scaling_oracle(1.5, 1.0, 0).unwrap().energy;
    let l2 = scaling_oracle(1.2, 1.0, 0).unwrap().energy;
    println!("scalar levels: {l1:.4e} {l2:.4e}");
    let t0 = Instant::now();
    let (_a, _b, path) = build_endpoints(&params, 2.5, &opts).unwrap();
    println!(
        "path: {} nodes, n = {}, ceiling {:.4e}  [{:.1?}]",
        path.nodes().len(),
        path.nodes()[0].grid().len(),
        path.reference_level(),
        t0.elapsed()
    );
    let t1 = Instant::now();
    match mountain_pass(&path, &opts) {
        Ok(result) => {
            println!(
                "saddle: level {:.6e}  discrete {:.6e}  gap {:.2e}  check {}  sweeps {}  dens {}  grad {:.2e}  [{:.1?}]",
                result.level,
                result.report.discrete_level,
                result.report.level_gap_rel,
                result.report.level_check,
                result.report.sweeps,
                result.report.densifications,
                result.report.final_grad_rel,
                t1.elapsed()
            );
            println!(
                "lambda ({:.4e}, {:.4e})  overlap {:.3e}  neg {:.2e}",
                result.solution.lambda1,
                result.solution.lambda2,
                result.solution.overlap,
                result.solution.negativity()
            );
        }
        Err(err) => println!("mountain pass failed after {:.1?}: {err}", t1.elapsed()),
    }
}
