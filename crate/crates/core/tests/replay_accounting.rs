//! Fused replay retires every selected occurrence in one cycle, so its
//! cycle count must equal the profile total minus the summed merits.

mod common;

use cidre_core::bitset::VertexSet;
use cidre_core::canon::canonicalize;
use cidre_core::config::Liveness;
use cidre_core::enumerate::{enumerate, ConstraintConfig, IoShape, SubgraphPattern};
use cidre_core::isa::Opcode::*;
use cidre_core::pipeline::Program;
use cidre_core::profile::{replay_fused, run_and_profile, FusedOccurrence, SimLimits};
use cidre_core::select::contraction_acyclic;
use common::{assemble, branch, ecall, i_type, r_type, random_loop_program, rng};
use rand::seq::SliceRandom;
use rand::Rng;

fn fuse(program: &Program, block: usize, p: &SubgraphPattern) -> FusedOccurrence {
    let c = canonicalize(&program.dfgs[block], p);
    FusedOccurrence {
        pattern: c.pattern,
        node_map: c.node_map,
        reg_map: c.reg_map,
        imm_map: c.imm_map,
    }
}

/// A seven-trip loop whose body starts with three dependent ALU operations
/// on a0, followed by two independent ones on t2.
fn seven_trips() -> Program {
    let image = assemble(&[
        i_type(Addi, 11, 0, 7),
        i_type(Addi, 12, 0, 3),
        // loop:
        r_type(Xor, 10, 10, 11),
        r_type(Add, 10, 10, 12),
        r_type(Sub, 10, 10, 11),
        r_type(Or, 7, 12, 11),
        r_type(And, 7, 7, 12),
        i_type(Addi, 11, 11, -1),
        branch(Bne, 11, 0, -24),
        i_type(Addi, 17, 0, 93),
        ecall(),
    ]);
    Program::from_image(image, Liveness::Conservative).unwrap()
}

fn loop_block(p: &Program) -> usize {
    p.cfg.block_id(common::BASE + 8).unwrap()
}

fn pattern(p: &Program, block: usize, members: &[usize]) -> SubgraphPattern {
    let g = &p.dfgs[block];
    let cfg = ConstraintConfig::with_io(IoShape::new(3, 1).unwrap());
    SubgraphPattern::new(g, VertexSet::from_items(g.len(), members.iter().copied()), &cfg)
}

#[test]
fn empty_selection_replays_the_plain_count() {
    let p = seven_trips();
    let plain = run_and_profile(&p.image, &p.cfg, SimLimits::default()).unwrap();
    let fused = vec![Vec::new(); p.cfg.blocks.len()];
    let replay = replay_fused(&p.image, &p.cfg, &p.dfgs, &fused, SimLimits::default()).unwrap();
    assert_eq!(replay.cycles, plain.profile.f_total);
    assert_eq!(plain.profile.f_total, 2 + 7 * 7 + 2);
}

#[test]
fn size_three_pattern_in_a_seven_trip_block_saves_fourteen() {
    let p = seven_trips();
    let b = loop_block(&p);
    let plain = run_and_profile(&p.image, &p.cfg, SimLimits::default()).unwrap();
    assert_eq!(plain.profile.count(p.cfg.blocks[b].start_address), 7);
    let mut fused = vec![Vec::new(); p.cfg.blocks.len()];
    fused[b].push(fuse(&p, b, &pattern(&p, b, &[0, 1, 2])));
    let replay = replay_fused(&p.image, &p.cfg, &p.dfgs, &fused, SimLimits::default()).unwrap();
    assert_eq!(replay.cycles, plain.profile.f_total - 14);
    assert_eq!(replay.exit_code, plain.exit_code);
    assert_eq!(replay.regs, plain.regs);
}

#[test]
fn disjoint_patterns_in_one_block_add_up() {
    let p = seven_trips();
    let b = loop_block(&p);
    let plain = run_and_profile(&p.image, &p.cfg, SimLimits::default()).unwrap();
    let mut fused = vec![Vec::new(); p.cfg.blocks.len()];
    fused[b].push(fuse(&p, b, &pattern(&p, b, &[0, 1, 2])));
    fused[b].push(fuse(&p, b, &pattern(&p, b, &[3, 4])));
    let replay = replay_fused(&p.image, &p.cfg, &p.dfgs, &fused, SimLimits::default()).unwrap();
    assert_eq!(replay.cycles, plain.profile.f_total - 14 - 7);
    assert_eq!(replay.regs, plain.regs);
}

#[test]
fn random_feasible_selections_account_exactly() {
    let mut fused_runs = 0;
    for seed in 0..150u64 {
        let mut r = rng(seed);
        let body = r.gen_range(4..12);
        let trips = r.gen_range(1..20);
        let image = random_loop_program(&mut r, body, trips);
        let liveness = if r.gen_bool(0.5) {
            Liveness::Global
        } else {
            Liveness::Conservative
        };
        let p = Program::from_image(image, liveness).unwrap();
        let plain = run_and_profile(&p.image, &p.cfg, SimLimits::default()).unwrap();
        let (i, o) = [(2, 1), (3, 1), (3, 2)][r.gen_range(0..3)];
        let cfg = ConstraintConfig::with_io(IoShape::new(i, o).unwrap());
        let mut fused = vec![Vec::new(); p.cfg.blocks.len()];
        let mut expected_saving = 0u64;
        for (b, block) in p.cfg.blocks.iter().enumerate() {
            let g = &p.dfgs[b];
            let succs: Vec<Vec<usize>> = (0..g.len()).map(|v| g.successors(v).collect()).collect();
            let mut candidates = enumerate(g, &cfg).unwrap();
            candidates.shuffle(&mut r);
            let mut taken: Vec<VertexSet> = Vec::new();
            for c in candidates {
                if taken.iter().any(|t| t.intersects(&c.vertices)) {
                    continue;
                }
                let mut sets: Vec<&VertexSet> = taken.iter().collect();
                sets.push(&c.vertices);
                if !contraction_acyclic(&succs, &sets) {
                    continue;
                }
                expected_saving += (c.size() as u64 - 1) * plain.profile.count(block.start_address);
                fused[b].push(fuse(&p, b, &c));
                taken.push(c.vertices.clone());
            }
        }
        let replay = replay_fused(&p.image, &p.cfg, &p.dfgs, &fused, SimLimits::default()).unwrap();
        assert_eq!(replay.cycles, plain.profile.f_total - expected_saving, "seed {seed}");
        assert_eq!(replay.exit_code, plain.exit_code, "seed {seed}");
        fused_runs += usize::from(expected_saving > 0);
    }
    assert!(fused_runs > 100, "{fused_runs}");
}
