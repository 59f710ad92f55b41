//! Scratch probe: is a half-disk candidate below the square's step value?
use capflow_core::domain::{BetaField, GridSpec};
use capflow_core::energy::{atw_energy, PerimeterStencil, StencilKind};
use capflow_core::shapes::{rasterize_union, Shape};
use capflow_core::stepper::{step_with, StepOptions};

fn main() {
    let dx = 1.0 / 32.0;
    let grid = GridSpec::new(1, dx, 64, 40, [-1.0, 0.0]).unwrap();
    let beta = BetaField::constant(grid, 0.5, 0.0).unwrap();
    let stencil = PerimeterStencil::new(StencilKind::N8, &grid);
    let square =
        rasterize_union(&[Shape::Box { min: [-0.5, 0.0, 0.0], max: [0.5, 0.0, 1.0] }], grid)
            .unwrap();
    let m0 = square.volume();
    for h in [0.05f64, 0.2] {
        let f_sq = atw_energy(&square, &square, h, m0, &beta, &stencil).unwrap();
        let r = (2.0 / std::f64::consts::PI).sqrt();
        let disk = rasterize_union(&[Shape::Ball { center: [0.0, 0.0, 0.0], radius: r }], grid)
            .unwrap();
        let f_disk = atw_energy(&disk, &square, h, m0, &beta, &stencil).unwrap();
        let (e_next, rec) =
            step_with(&square, h, m0, &beta, &stencil, StepOptions::default()).unwrap();
        let f_step = atw_energy(&e_next, &square, h, m0, &beta, &stencil).unwrap();
        println!(
            "h={h}: F(square)={f_sq:.6} F(half-disk)={f_disk:.6} F(step)={f_step:.6} moved={} lambda={:.3}",
            rec.sym_diff_cells, rec.lambda
        );
    }
}
