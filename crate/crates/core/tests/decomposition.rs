use proptest::prelude::*;
use xstencil_core::dmp::{generate_exchanges, local_bounds, ExchangeDecl, GridTopology};
use xstencil_core::ir::{parse_module, print_module, Attribute};
use xstencil_core::passes::run_pipeline;
use xstencil_core::stencil::{AccessExtent, Bounds};

fn grid(dims: &[usize]) -> GridTopology {
    GridTopology::new(dims.to_vec()).unwrap()
}

#[test]
fn neighbor_ranks_are_row_major_without_wrap() {
    let g = grid(&[2, 2]);
    assert_eq!(g.neighbor_rank(&[0, 1], &[0, -1]), Some(0));
    assert_eq!(g.neighbor_rank(&[0, 0], &[0, -1]), None);
    let g = grid(&[2, 4, 4]);
    assert_eq!(g.neighbor_rank(&[1, 2, 3], &[0, 0, 1]), None);
    assert_eq!(g.neighbor_rank(&[1, 2, 3], &[0, 1, 0]), Some(31));
    // Enumeration oracle: every rank maps to its coordinate and back.
    for r in 0..g.num_ranks() {
        let c = g.coord_of(r);
        assert_eq!(c, vec![r / 16, (r / 4) % 4, r % 4]);
        assert_eq!(g.rank_of(&c), r);
    }
}

#[test]
fn block_distribution() {
    let g = Bounds::new(vec![0], vec![128]);
    assert_eq!(local_bounds(&g, &grid(&[1]), &[0]).unwrap(), g);
    assert_eq!(local_bounds(&g, &grid(&[4]), &[1]).unwrap(), Bounds::new(vec![32], vec![64]));
    let g = Bounds::new(vec![0], vec![130]);
    let sizes: Vec<i64> = (0..4).map(|i| local_bounds(&g, &grid(&[4]), &[i]).unwrap().shape()[0]).collect();
    assert_eq!(sizes, [33, 33, 32, 32]);
    assert_eq!(local_bounds(&g, &grid(&[4]), &[2]).unwrap(), Bounds::new(vec![66], vec![98]));
}

fn listing2_exchanges() -> Vec<ExchangeDecl> {
    let m = parse_module(include_str!("fixtures/listing2.xir")).unwrap();
    let mut out = Vec::new();
    m.walk(&mut |op| {
        if let Some(Attribute::Array(a)) = op.attr("swaps") {
            for e in a {
                if let Attribute::Exchange(e) = e {
                    out.push(e.clone());
                }
            }
        }
    });
    out
}

#[test]
fn listing2_exchanges_are_regenerated() {
    let want = listing2_exchanges();
    assert_eq!(want.len(), 2);
    let g = grid(&[2, 2]);
    let core = Bounds::new(vec![0, 0], vec![100, 100]);
    let halo = AccessExtent::symmetric(&[4, 4]);
    // The rank with a -y neighbour receives the first, the one with a +y
    // neighbour the second.
    assert!(generate_exchanges(&halo, &core, &g, &[0, 1]).contains(&want[0]));
    assert!(generate_exchanges(&halo, &core, &g, &[0, 0]).contains(&want[1]));
    assert!(generate_exchanges(&halo, &core, &grid(&[1, 1]), &[0, 0]).is_empty());
}

#[test]
fn one_dimensional_jacobi_exchange() {
    let ex = generate_exchanges(&AccessExtent::symmetric(&[1]), &Bounds::new(vec![0], vec![64]), &grid(&[2]), &[0]);
    assert_eq!(ex, vec![ExchangeDecl { at: vec![65], size: vec![1], source_offset: vec![-1], to: vec![1] }]);
}

#[test]
fn decomposed_jacobi_has_one_swap_before_the_load() {
    let m = parse_module(include_str!("fixtures/listing1.xir")).unwrap();
    let d = run_pipeline(&m, "decompose grid=2").unwrap();
    let p = print_module(&d);
    assert!(p.contains("@jacobi(%0: !field<[-1,65]xf64>, %1: !field<[0,64]xf64>)"), "{p}");
    assert_eq!(d.count_ops("dmp.swap"), 1);
    let swap = p.find("dmp.swap").unwrap();
    assert!(swap < p.find("stencil.load").unwrap());
    // The identity grid swaps nothing.
    let t = print_module(&run_pipeline(&m, "decompose grid=1").unwrap());
    assert!(t.contains("swaps = []"), "{t}");
}

#[test]
fn uneven_domains_are_rejected() {
    let m = parse_module(include_str!("fixtures/listing1.xir")).unwrap();
    assert!(run_pipeline(&m, "decompose grid=3").is_err());
    assert!(run_pipeline(&m, "decompose grid=2x2").is_err());
}

/// Random global domain, grid and access extent, sized so every core is at
/// least as wide as the halo.
#[derive(Debug, Clone)]
struct Case {
    global: Bounds,
    topo: GridTopology,
    extent: AccessExtent,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..=3)
        .prop_flat_map(|rank| {
            (
                Just(rank),
                1..=rank,
                prop::collection::vec(1usize..=4, rank),
                prop::collection::vec(-5i64..5, rank),
                prop::collection::vec((-3i64..=0, 0i64..=3), rank),
                prop::collection::vec(0i64..4, rank),
                prop::collection::vec(0i64..4, rank),
            )
        })
        .prop_map(|(rank, grid_rank, dims, lb, ext, extra, rem)| {
            let dims = dims[..grid_rank].to_vec();
            let extent = AccessExtent { min: ext.iter().map(|e| e.0).collect(), max: ext.iter().map(|e| e.1).collect() };
            let width = extent.halo_width();
            let ub = (0..rank)
                .map(|d| {
                    let n = match dims.get(d) {
                        Some(&p) => p as i64 * (width[d].max(1) + extra[d]) + rem[d] % p as i64,
                        None => 1 + extra[d],
                    };
                    lb[d] + n
                })
                .collect();
            Case { global: Bounds::new(lb, ub), topo: GridTopology::new(dims).unwrap(), extent }
        })
}

fn to_global(e_at: &[i64], core: &Bounds, width: &[i64]) -> Vec<i64> {
    e_at.iter().zip(&core.lb).zip(width).map(|((a, l), w)| a - w + l).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cores_cover_the_domain_disjointly(c in case()) {
        let cores: Vec<Bounds> = (0..c.topo.num_ranks()).map(|r| local_bounds(&c.global, &c.topo, &c.topo.coord_of(r)).unwrap()).collect();
        let total: i64 = cores.iter().map(Bounds::num_points).sum();
        prop_assert_eq!(total, c.global.num_points());
        for (i, a) in cores.iter().enumerate() {
            prop_assert!(c.global.contains(a));
            for b in &cores[i + 1..] {
                prop_assert!(!a.overlaps(b), "{} overlaps {}", a, b);
            }
        }
    }

    #[test]
    fn sends_and_receives_are_reciprocal(c in case()) {
        let width = c.extent.halo_width();
        let cores: Vec<Bounds> = (0..c.topo.num_ranks()).map(|r| local_bounds(&c.global, &c.topo, &c.topo.coord_of(r)).unwrap()).collect();
        for r in 0..c.topo.num_ranks() {
            let coord = c.topo.coord_of(r);
            let core = &cores[r];
            let buffer = core.widen(&AccessExtent::symmetric(&width));
            let ex = generate_exchanges(&c.extent, core, &c.topo, &coord);
            // One exchange per existing neighbour along each dimension with a halo.
            let expected = (0..c.topo.rank())
                .filter(|&d| width[d] > 0)
                .flat_map(|d| [-1i64, 1].map(move |s| (d, s)))
                .filter(|&(d, s)| {
                    let mut o = vec![0; c.topo.rank()];
                    o[d] = s;
                    c.topo.neighbor_rank(&coord, &o).is_some()
                })
                .count();
            prop_assert_eq!(ex.len(), expected);
            for e in &ex {
                prop_assert!(e.validate().is_ok());
                prop_assert!(e.fits(&buffer.shape()));
                let peer = c.topo.neighbor_rank(&coord, &e.to).unwrap();
                let recv = Bounds::new(to_global(&e.at, core, &width), to_global(&e.at, core, &width).iter().zip(&e.size).map(|(a, s)| a + s).collect());
                // Received data lies in this rank's halo and the peer's core.
                prop_assert!(buffer.contains(&recv) && !recv.overlaps(core));
                prop_assert!(cores[peer].contains(&recv), "{} not owned by {}", recv, cores[peer]);
                // The peer sends exactly that region back the other way.
                let back: Vec<i64> = e.to.iter().map(|t| -t).collect();
                let peer_ex = generate_exchanges(&c.extent, &cores[peer], &c.topo, &c.topo.coord_of(peer));
                let m = peer_ex.iter().find(|p| p.to == back);
                prop_assert!(m.is_some());
                let m = m.unwrap();
                prop_assert_eq!(&m.size, &e.size);
                prop_assert_eq!(to_global(&m.send_at(), &cores[peer], &width), recv.lb.clone());
            }
        }
    }
}
