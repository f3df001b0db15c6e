use mpqp_core::enumerator::{enumerate, solve_for_active_set, EnumerateOptions};
use mpqp_core::eval::{eval_hyperplane, eval_solution, EvalScratch, Hyperplane};
use mpqp_core::io::{problem_hash, read_tree, serialized_real_count, write_tree};
use mpqp_core::lowrank::{add_constraint_update, remove_constraint_update};
use mpqp_core::tree::{build_tree, memory_lowrank, RootPolicy};
use mpqp_core::verify::{check_storage_sets, law_difference, sample_region};
use mpqp_core::{ActiveSet, MpQpProblem, ParamDomain};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// `nz` variables, `nc` rows, two parameters, `H = M M^T + I`.
fn problem_strategy() -> impl Strategy<Value = MpQpProblem> {
    (2usize..4, 2usize..5).prop_flat_map(|(nz, nc)| {
        (
            prop::collection::vec(-1.0..1.0f64, nz * nz),
            prop::collection::vec(-1.0..1.0f64, nc * nz),
            prop::collection::vec(0.1..1.0f64, nc),
            prop::collection::vec(-1.0..1.0f64, nc * 2),
        )
            .prop_map(move |(m, g, b, s)| {
                let m = DMatrix::from_row_slice(nz, nz, &m);
                let h = &m * m.transpose() + DMatrix::identity(nz, nz);
                MpQpProblem::new(
                    h,
                    DMatrix::from_row_slice(nc, nz, &g),
                    DVector::from_vec(b),
                    DMatrix::from_row_slice(nc, 2, &s),
                    ParamDomain::bounds(2, -1.0, 1.0),
                )
                .unwrap()
            })
    })
}

fn subset(nc: usize, mask: u32, limit: usize) -> ActiveSet {
    ActiveSet::new((0..nc).filter(|i| mask & (1 << i) != 0).take(limit).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_one_step_matches_direct_solve(problem in problem_strategy(), mask in any::<u32>(), j in 0usize..5, p in prop::collection::vec(-1.0..1.0f64, 2)) {
        let nc = problem.nc();
        let j = j % nc;
        let a = subset(nc, mask, problem.nz() - 1);
        prop_assume!(!a.contains(j));
        let Ok(parent) = solve_for_active_set(&problem, &a) else { return Ok(()) };
        let Ok((update, child)) = add_constraint_update(&problem, &parent, j) else { return Ok(()) };
        let direct = solve_for_active_set(&problem, &a.with(j)).unwrap();
        prop_assert!(law_difference(&child, &direct) < 1e-8);
        let p = DVector::from_vec(p);
        let step = direct.primal(&p) - parent.primal(&p);
        let predicted = &update.f * update.scalar(&p);
        prop_assert!((step - predicted).amax() < 1e-8 * (1.0 + direct.primal(&p).amax()));
    }

    #[test]
    fn add_then_remove_is_identity(problem in problem_strategy(), mask in any::<u32>(), j in 0usize..5) {
        let nc = problem.nc();
        let j = j % nc;
        let a = subset(nc, mask, problem.nz() - 1);
        prop_assume!(!a.contains(j));
        let Ok(parent) = solve_for_active_set(&problem, &a) else { return Ok(()) };
        let Ok((up, child)) = add_constraint_update(&problem, &parent, j) else { return Ok(()) };
        let (down, back) = remove_constraint_update(&problem, &child, j).unwrap();
        prop_assert_eq!(&back.active_set, &parent.active_set);
        prop_assert!(law_difference(&back, &parent) < 1e-8);
        // the removal payload is the addition payload with f and d negated
        prop_assert!((up.c - down.c).abs() < 1e-12 * (1.0 + up.c.abs()));
        prop_assert!((&up.f + &down.f).amax() < 1e-12 * (1.0 + up.f.amax()));
    }

    #[test]
    fn tree_invariants(problem in problem_strategy()) {
        let Ok(sol) = enumerate(&problem, &EnumerateOptions::default()) else { return Ok(()) };
        let tree = build_tree(&sol, RootPolicy::Empty, None).unwrap();
        prop_assert!(check_storage_sets(&tree).unwrap());

        let bytes = write_tree(&tree, &problem_hash(&sol.problem));
        prop_assert_eq!(serialized_real_count(&bytes).unwrap(), memory_lowrank(&tree, sol.problem.nz()));
        prop_assert_eq!(&read_tree(&bytes).unwrap().tree, &tree);

        for i in 0..sol.num_regions() {
            let node = tree.node(i).unwrap();
            let rows: Vec<Hyperplane> = node.s_primal.iter().map(|&n| Hyperplane::Primal(n))
                .chain(node.s_dual.iter().map(|&n| Hyperplane::Dual(n)))
                .collect();
            for p in sample_region(&sol, i, 3, 11).unwrap() {
                let z = eval_solution(&tree, i, &p).unwrap();
                prop_assert!((z - sol.regions[i].primal(&p)).amax() < 1e-8);
                // the shared per-query cache never changes a value
                let mut shared = EvalScratch::new();
                for &h in &rows {
                    let cached = eval_hyperplane(&tree, i, h, &p, &mut shared).unwrap();
                    let fresh = eval_hyperplane(&tree, i, h, &p, &mut EvalScratch::new()).unwrap();
                    prop_assert_eq!(cached, fresh);
                }
            }
        }
    }
}
