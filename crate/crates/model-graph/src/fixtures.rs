//! Model fixtures used across the workspace tests and the CLI reproduction
//! tables.

use std::collections::HashMap;

use crate::graph::ModelGraph;
use crate::layer::{BranchKind, BranchStructure, LayerKind, LayerSpec};

/// Incrementally builds a graph while tracking each layer's output channels,
/// so `in_channels` can never drift out of sync with the wiring.
struct Builder {
    layers: Vec<LayerSpec>,
    channels: HashMap<String, usize>,
    structures: Vec<BranchStructure>,
    input_channels: usize,
    next: usize,
}

impl Builder {
    fn new(input_channels: usize) -> Self {
        Builder {
            layers: Vec::new(),
            channels: HashMap::new(),
            structures: Vec::new(),
            input_channels,
            next: 0,
        }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{:03}", self.next)
    }

    fn channels_of(&self, id: &str) -> usize {
        if id.is_empty() {
            self.input_channels
        } else {
            self.channels[id]
        }
    }

    fn conv(&mut self, from: &str, filters: usize, kernel: usize, stride: usize) -> String {
        let id = self.fresh("c");
        let in_channels = self.channels_of(from);
        let inputs = if from.is_empty() { vec![] } else { vec![from.to_string()] };
        self.layers.push(LayerSpec::conv(
            id.clone(),
            filters,
            in_channels,
            (kernel, kernel),
            stride,
            kernel / 2,
            inputs,
        ));
        self.channels.insert(id.clone(), filters);
        id
    }

    fn add(&mut self, a: &str, b: &str) -> String {
        let id = self.fresh("a");
        self.layers.push(LayerSpec::plain(
            id.clone(),
            LayerKind::PointwiseAdd,
            vec![a.to_string(), b.to_string()],
        ));
        self.channels.insert(id.clone(), self.channels[a]);
        id
    }

    fn concat(&mut self, inputs: &[&str]) -> String {
        let id = self.fresh("j");
        let channels = inputs.iter().map(|i| self.channels[*i]).sum();
        self.layers.push(LayerSpec::plain(
            id.clone(),
            LayerKind::Concat,
            inputs.iter().map(|s| s.to_string()).collect(),
        ));
        self.channels.insert(id.clone(), channels);
        id
    }

    fn upsample(&mut self, from: &str) -> String {
        let id = self.fresh("u");
        self.layers.push(LayerSpec::plain(
            id.clone(),
            LayerKind::Upsample,
            vec![from.to_string()],
        ));
        self.channels.insert(id.clone(), self.channels[from]);
        id
    }

    fn head_tail(&mut self, from: &str) -> Vec<String> {
        let t = self.fresh("t");
        self.layers.push(LayerSpec::plain(
            t.clone(),
            LayerKind::TransposeReshape,
            vec![from.to_string()],
        ));
        self.channels.insert(t.clone(), self.channels[from]);
        let m = self.fresh("m");
        self.layers.push(LayerSpec::plain(
            m.clone(),
            LayerKind::PointwiseMul,
            vec![t.clone(), t.clone()],
        ));
        self.channels.insert(m.clone(), self.channels[&t]);
        let a = self.fresh("a");
        self.layers.push(LayerSpec::plain(
            a.clone(),
            LayerKind::PointwiseAdd,
            vec![m.clone(), m.clone()],
        ));
        self.channels.insert(a.clone(), self.channels[&m]);
        vec![t, m, a]
    }

    fn structure(&mut self, kind: BranchKind, branches: Vec<Vec<String>>, copy_bytes: u64) {
        self.structures.push(BranchStructure {
            kind,
            branches,
            copy_bytes,
        });
    }

    fn finish(self, input_shape: (usize, usize, usize)) -> ModelGraph {
        ModelGraph::new(self.layers, self.structures, input_shape).expect("fixture graph is valid")
    }
}

struct CspStage {
    downsample: usize,
    split: usize,
    res_inner: usize,
    res_units: usize,
    transition: usize,
}

/// One cross-stage-partial stage: a strided downsample conv, a short 1x1
/// branch, a residual-unit branch, and a 1x1 transition after the concat.
/// Returns the transition layer id. Registers the two paths as a
/// conv-branches structure.
fn csp_stage(b: &mut Builder, from: &str, stage: &CspStage, spatial: usize) -> String {
    let down = b.conv(from, stage.downsample, 3, 2);
    let short = b.conv(&down, stage.split, 1, 1);
    let mut main_layers = Vec::new();
    let main_in = b.conv(&down, stage.split, 1, 1);
    main_layers.push(main_in.clone());
    let mut x = main_in;
    for _ in 0..stage.res_units {
        let inner = b.conv(&x, stage.res_inner, 1, 1);
        let outer = b.conv(&inner, stage.split, 3, 1);
        let sum = b.add(&x, &outer);
        main_layers.extend([inner, outer, sum.clone()]);
        x = sum;
    }
    let post = b.conv(&x, stage.split, 1, 1);
    main_layers.push(post.clone());
    let joined = b.concat(&[&post, &short]);
    let copy_bytes = (stage.split * spatial * spatial * 4) as u64;
    b.structure(
        BranchKind::ConvBranches,
        vec![main_layers, vec![short]],
        copy_bytes,
    );
    b.conv(&joined, stage.transition, 1, 1)
}

/// The YOLOv4 topology at 320x320: CSPDarknet53 backbone, SPP, PAN neck, and
/// three detection heads (80 classes, 255-channel outputs). Weights are
/// counted from conv kernels only. The SPP pools preserve shape, so they are
/// modeled as a four-way self-concat.
pub fn yolov4_320() -> ModelGraph {
    let mut b = Builder::new(3);
    let stem = b.conv("", 32, 3, 1);

    let stages = [
        CspStage { downsample: 64, split: 64, res_inner: 32, res_units: 1, transition: 64 },
        CspStage { downsample: 128, split: 64, res_inner: 64, res_units: 2, transition: 128 },
        CspStage { downsample: 256, split: 128, res_inner: 128, res_units: 8, transition: 256 },
        CspStage { downsample: 512, split: 256, res_inner: 256, res_units: 8, transition: 512 },
        CspStage { downsample: 1024, split: 512, res_inner: 512, res_units: 4, transition: 1024 },
    ];
    let mut x = stem;
    let mut taps = Vec::new();
    let mut spatial = 320;
    for stage in &stages {
        spatial /= 2;
        x = csp_stage(&mut b, &x, stage, spatial);
        taps.push(x.clone());
    }
    let p3 = taps[2].clone(); // 256ch @ 40
    let p4 = taps[3].clone(); // 512ch @ 20
    let p5 = taps[4].clone(); // 1024ch @ 10

    // SPP block; the pooling branches keep (C,H,W), hence the self-concat.
    let n1 = b.conv(&p5, 512, 1, 1);
    let n2 = b.conv(&n1, 1024, 3, 1);
    let n3 = b.conv(&n2, 512, 1, 1);
    let spp = b.concat(&[&n3, &n3, &n3, &n3]);
    let n4 = b.conv(&spp, 512, 1, 1);
    let n5 = b.conv(&n4, 1024, 3, 1);
    let p5_out = b.conv(&n5, 512, 1, 1);

    let five = |b: &mut Builder, from: &str, narrow: usize| {
        let c1 = b.conv(from, narrow, 1, 1);
        let c2 = b.conv(&c1, narrow * 2, 3, 1);
        let c3 = b.conv(&c2, narrow, 1, 1);
        let c4 = b.conv(&c3, narrow * 2, 3, 1);
        b.conv(&c4, narrow, 1, 1)
    };

    // Upsample path to the 20x20 level.
    let up5 = b.conv(&p5_out, 256, 1, 1);
    let u1 = b.upsample(&up5);
    let p4_route = b.conv(&p4, 256, 1, 1);
    let j1 = b.concat(&[&p4_route, &u1]);
    let p4_mid = five(&mut b, &j1, 256);

    // Upsample path to the 40x40 level.
    let up4 = b.conv(&p4_mid, 128, 1, 1);
    let u2 = b.upsample(&up4);
    let p3_route = b.conv(&p3, 128, 1, 1);
    let j2 = b.concat(&[&p3_route, &u2]);
    let p3_out = five(&mut b, &j2, 128);

    let h1 = b.conv(&p3_out, 256, 3, 1);
    let h1_out = b.conv(&h1, 255, 1, 1);

    // PAN downsample path back to 20x20 and 10x10.
    let d1 = b.conv(&p3_out, 256, 3, 2);
    let j3 = b.concat(&[&d1, &p4_mid]);
    let p4_out = five(&mut b, &j3, 256);
    let h2 = b.conv(&p4_out, 512, 3, 1);
    let h2_out = b.conv(&h2, 255, 1, 1);

    let d2 = b.conv(&p4_out, 512, 3, 2);
    let j4 = b.concat(&[&d2, &p5_out]);
    let p5_final = five(&mut b, &j4, 512);
    let h3 = b.conv(&p5_final, 1024, 3, 1);
    let h3_out = b.conv(&h3, 255, 1, 1);

    // Non-CONV head tails, one branch per detection scale.
    let tail1 = b.head_tail(&h1_out);
    let tail2 = b.head_tail(&h2_out);
    let tail3 = b.head_tail(&h3_out);
    let head_bytes = (255 * 40 * 40 * 4) as u64;
    b.structure(
        BranchKind::NonConvBranches,
        vec![tail1, tail2, tail3],
        head_bytes,
    );

    b.finish((3, 320, 320))
}

/// Four-layer CNN for the synthetic two-class task: two 3x3 convs and two
/// fully-connected layers, 19,720 weights.
pub fn toy_cnn() -> ModelGraph {
    let layers = vec![
        LayerSpec::conv("conv1", 8, 1, (3, 3), 1, 1, vec![]),
        LayerSpec::conv("conv2", 16, 8, (3, 3), 2, 1, vec!["conv1".into()]),
        LayerSpec::fc("fc1", 32, 16 * 6 * 6, vec!["conv2".into()]),
        LayerSpec::fc("fc2", 2, 32, vec!["fc1".into()]),
    ];
    ModelGraph::new(layers, vec![], (1, 12, 12)).expect("fixture graph is valid")
}

/// Variant of [`toy_cnn`] with a deliberately narrow integration layer
/// (12 hidden units), 8,160 weights. Used for pruning-scheme comparisons:
/// at high compression a whole-unit scheme retains only one or two hidden
/// units here, so the cost of coarse granularity shows up at desk scale.
/// Comparisons should keep the 72-weight stem and the 24-weight head dense
/// for every scheme; both are a rounding error of the budget, and pruning
/// a 9-column stem degenerates every scheme into the same single-tap mask.
pub fn comparison_cnn() -> ModelGraph {
    let layers = vec![
        LayerSpec::conv("conv1", 8, 1, (3, 3), 1, 1, vec![]),
        LayerSpec::conv("conv2", 16, 8, (3, 3), 2, 1, vec!["conv1".into()]),
        LayerSpec::fc("fc1", 12, 16 * 6 * 6, vec!["conv2".into()]),
        LayerSpec::fc("fc2", 2, 12, vec!["fc1".into()]),
    ];
    ModelGraph::new(layers, vec![], (1, 12, 12)).expect("fixture graph is valid")
}

/// Small branched model exercising both structure kinds: a two-branch conv
/// fork and a three-branch non-CONV head tail.
pub fn two_branch_demo() -> ModelGraph {
    let mut b = Builder::new(4);
    let stem = b.conv("", 8, 3, 1);
    let b1a = b.conv(&stem, 16, 3, 1);
    let b1b = b.conv(&b1a, 16, 3, 1);
    let b2a = b.conv(&stem, 16, 1, 1);
    let join = b.concat(&[&b1b, &b2a]);
    b.structure(
        BranchKind::ConvBranches,
        vec![vec![b1a, b1b], vec![b2a]],
        (16 * 16 * 16 * 4) as u64,
    );
    let mut tails = Vec::new();
    for _ in 0..3 {
        let head_conv = b.conv(&join, 8, 1, 1);
        tails.push(b.head_tail(&head_conv));
    }
    b.structure(
        BranchKind::NonConvBranches,
        tails,
        (8 * 16 * 16 * 4) as u64,
    );
    b.finish((4, 16, 16))
}
