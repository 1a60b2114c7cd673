use threefield::verify::{make_case, run_convergence_study};

fn main() {
    let paper_k1 = [
        (8.19e-3, 1.62e-1, 3.19e0),
        (2.15e-3, 4.28e-2, 8.44e-1),
        (5.45e-4, 1.09e-2, 2.14e-1),
        (1.37e-4, 2.73e-3, 5.38e-2),
    ];
    let case = make_case("efk_ss_2d", 1.0).unwrap();
    let (report, _) = run_convergence_study(&case, 1, &[2, 4, 8, 16], 0.01, 0.1, 1e-10).unwrap();
    for (row, p) in report.rows.iter().zip(paper_k1) {
        println!(
            "n={:2} dof={:6} e_u={:.3e} ({:+.1}%)  e_s={:.3e} ({:+.1}%)  e_p={:.3e} ({:+.1}%)",
            row.n, row.dof,
            row.e_u, 100.0 * (row.e_u / p.0 - 1.0),
            row.e_sigma, 100.0 * (row.e_sigma / p.1 - 1.0),
            row.e_phi, 100.0 * (row.e_phi / p.2 - 1.0),
        );
    }
}
