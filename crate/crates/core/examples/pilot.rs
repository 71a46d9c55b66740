//! Records the defect curves of the `z-folner` preset over the doubling
//! schedule `j ∈ {2, 4, 8, 16, 32}` as JSON on stdout.
//!
//! ```text
//! cargo run --release -p cpclim-core --example pilot > crates/core/tests/fixtures/z_folner_pilot.json
//! ```

use std::time::Instant;

use cpclim::audit::{self, ElementContext};
use cpclim::groupalg::GroupAlgebraElement;
use cpclim::{presets, GroupElement, C64, DEFAULT_GRID_FACTOR};
use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

const JS: [usize; 5] = [2, 4, 8, 16, 32];

fn swap2() -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |a, b| if a != b { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

fn main() -> cpclim::Result<()> {
    let t0 = Instant::now();
    let sys = presets::system("z-folner", None)?;
    let approx = sys.approximation().expect("følner preset").clone();
    eprintln!("built {} stages in {:.1?}", sys.num_stages(), t0.elapsed());
    let gf = DEFAULT_GRID_FACTOR;

    let mut out = Map::new();
    for k in [0usize, 1, 2] {
        let ctx = ElementContext { system: &sys, k, seed: 0 };
        let x = ctx.eval_str(&format!("psi({k}, delta(1))"))?;
        let x2 = x.amplify_pattern(&DMatrix::identity(2, 2))?;
        let xs = x.amplify_pattern(&swap2())?;
        let mut curves: Map<String, Value> = Map::new();
        let mut push = |name: &str, v: f64| {
            curves.entry(name.to_string()).or_insert_with(|| json!([])).as_array_mut().unwrap().push(json!(v));
        };
        for &j in &JS {
            let (n, m) = (2 * j, 4 * j);
            push("stinespring", audit::defect_stinespring(&sys, k, &x, &x, j, n, m)?);
            push("associativity", audit::defect_associativity(&sys, k, &x, &x, &x, j, n, m)?);
            push("cstar_identity_r1", audit::defect_cstar_identity(&sys, k, &x, 1, n, m)?);
            push("cstar_identity_r2_diag", audit::defect_cstar_identity(&sys, k, &x2, 2, n, m)?);
            push("cstar_identity_r2_swap", audit::defect_cstar_identity(&sys, k, &xs, 2, n, m)?);
            push("norm_limit_r1", audit::norm_limit_check(&sys, k, &x, 1, n, m)?);
            push("norm_limit_r2_swap", audit::norm_limit_check(&sys, k, &xs, 2, n, m)?);
            push("multiplicative", audit::defect_multiplicative(&sys, k, &x, &x, n, m)?);
            if k <= j {
                push("product_vs_oracle", audit::product_vs_oracle(&approx, k, &x, &x, n, m, gf)?);
            }
            let rep = sys.rho(m, n)?.apply(&sys.rho(n, k)?.apply(&x)?.checked_mul(&sys.rho(n, k)?.apply(&x)?)?)?;
            let push_fwd = approx.phi(m, &rep)?;
            let d2 = GroupAlgebraElement::delta(approx.group(), &GroupElement::int(2))?;
            let dist = GroupAlgebraElement::distance(&push_fwd, &d2, gf)?;
            push("pushforward_distance_to_delta2_upper", dist.upper);
            push("pushforward_coeff_at_2", push_fwd.coeff(&GroupElement::int(2)).re);
            push("representative_norm", rep.norm());
            eprintln!("k={k} j={j} done at {:.1?}", t0.elapsed());
        }
        out.insert(format!("k{k}"), Value::Object(curves));
    }
    let doc = json!({
        "system": sys.describe(),
        "schedule_j": JS,
        "element": "psi(k, delta(1)) for x = y = z",
        "grid_factor": gf,
        "curves": out,
    });
    println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    Ok(())
}
