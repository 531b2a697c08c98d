use maxwell_abc::field::Field6;
use maxwell_abc::grid::Grid;
use maxwell_abc::linear::*;

fn run(width: f64, horizon: f64, cflf: f64, z0: f64, levels: &[usize]) {
    let mut prev: Option<f64> = None;
    print!("w={width} T={horizon} cfl={cflf} z0={z0}: ");
    for &n in levels {
        let g = Grid::boxed(1.0, 1.0, [n, n, n]).unwrap();
        let coeffs = ConstantCoefficients::free_space();
        let u0 = Field6::sample(&g, |x| {
            let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - z0).powi(2);
            let v = (-r2 / (width * width)).exp();
            [0.0, v, 0.0, 0.0, 0.0, v]
        });
        let data = ProblemData::homogeneous(u0);
        let dt = cflf * g.dx(2);
        let opts = SolveOptions { store_stride: 0, check_coefficients: false, ..Default::default() };
        let traj = solve_linear(&coeffs, &data, &g, 0.0, horizon, dt, &opts).unwrap();
        let a = energy_audit(&traj);
        match prev {
            Some(p) => print!("{:.3e} (r={:.2}) ", a.residual, p / a.residual),
            None => print!("{:.3e} ", a.residual),
        }
        prev = Some(a.residual);
    }
    println!();
}

fn main() {
    for width in [0.14, 0.18, 0.22] {
        for z0 in [0.3, 0.45] {
            run(width, 0.6, 0.35, z0, &[16, 24, 32, 48]);
        }
    }
}
