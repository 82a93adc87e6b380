//! Topological convolution over faces, edges and coedges.
//!
//! Every entity starts from a linear projection of its feature row. Each layer
//! then updates coedges from the concatenated states of their winged-edge
//! neighborhood, and faces and edges from a max over their coedges. The face
//! states of the last layer are the face embeddings.

use serde::{Deserialize, Serialize};

use crate::brep::{kernel_neighborhood, BRep};
use crate::features::FeatureMatrices;
use crate::model::ModelError;
use crate::nn::{Linear, ModelParams, Tape, Var};
use crate::rng::SplitMix64;

/// Entities in the walk set of a coedge: 6 coedges, 2 faces, 1 edge.
pub const WALK_LEN: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub d_emb: usize,
    pub n_layers: usize,
    pub hidden: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig { d_emb: 64, n_layers: 2, hidden: 64 }
    }
}

/// Index lists derived once per model.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    walk_coedges: [Vec<usize>; 6],
    walk_faces: [Vec<usize>; 2],
    walk_edge: Vec<usize>,
    /// Coedges of each face, ascending.
    pub face_coedges: Vec<Vec<usize>>,
    edge_coedges: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(b: &BRep) -> Result<Topology, ModelError> {
        let mut walk_coedges: [Vec<usize>; 6] = Default::default();
        let mut walk_faces: [Vec<usize>; 2] = Default::default();
        let mut walk_edge = Vec::with_capacity(b.num_coedges());
        for c in 0..b.num_coedges() {
            let w = kernel_neighborhood(b, c).map_err(|e| ModelError::Topology(e.to_string()))?;
            for (dst, &v) in walk_coedges.iter_mut().zip(&w.coedges) {
                dst.push(v);
            }
            for (dst, &v) in walk_faces.iter_mut().zip(&w.faces) {
                dst.push(v);
            }
            walk_edge.push(w.edge);
        }
        let face_coedges = b.face_coedges();
        if let Some(f) = face_coedges.iter().position(Vec::is_empty) {
            return Err(ModelError::Topology(format!("face {f} has no coedges")));
        }
        let mut edge_coedges = vec![Vec::new(); b.num_edges()];
        for c in &b.coedges {
            edge_coedges[c.edge].push(c.id);
        }
        if let Some(e) = edge_coedges.iter().position(Vec::is_empty) {
            return Err(ModelError::Topology(format!("edge {e} has no coedges")));
        }
        Ok(Topology { walk_coedges, walk_faces, walk_edge, face_coedges, edge_coedges })
    }

    pub fn num_faces(&self) -> usize {
        self.face_coedges.len()
    }
}

#[derive(Clone, Debug)]
struct Layer {
    coedge: Linear,
    face: Linear,
    edge: Option<Linear>,
}

/// Parameter handles of the backbone.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    input_dims: (usize, usize, usize),
    in_f: Linear,
    in_e: Linear,
    in_c: Linear,
    layers: Vec<Layer>,
}

impl Backbone {
    /// Registers the backbone parameters in `p`.
    pub fn new(
        config: BackboneConfig,
        input_dims: (usize, usize, usize),
        p: &mut ModelParams,
        rng: &mut SplitMix64,
    ) -> Result<Backbone, ModelError> {
        if config.n_layers == 0 || config.hidden == 0 || config.d_emb == 0 {
            return Err(ModelError::Arch("backbone widths and depth must be positive".into()));
        }
        let h = config.hidden;
        let (df, de, dc) = input_dims;
        let in_f = Linear::new(p, "backbone.in_f", df, h, rng)?;
        let in_e = Linear::new(p, "backbone.in_e", de, h, rng)?;
        let in_c = Linear::new(p, "backbone.in_c", dc, h, rng)?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let last = l + 1 == config.n_layers;
            let coedge = Linear::new(p, &format!("backbone.l{l}.coedge"), WALK_LEN * h, h, rng)?;
            let face = Linear::new(p, &format!("backbone.l{l}.face"), h, if last { config.d_emb } else { h }, rng)?;
            // The last edge update would feed nothing.
            let edge = if last { None } else { Some(Linear::new(p, &format!("backbone.l{l}.edge"), h, h, rng)?) };
            layers.push(Layer { coedge, face, edge });
        }
        Ok(Backbone { config, input_dims, in_f, in_e, in_c, layers })
    }

    /// Face embeddings, `N_f × d_emb`.
    pub fn forward(
        &self,
        t: &mut Tape,
        p: &ModelParams,
        fm: &FeatureMatrices,
        topo: &Topology,
    ) -> Result<Var, ModelError> {
        if fm.dims() != self.input_dims {
            return Err(ModelError::Arch(format!("feature dims {:?}, network expects {:?}", fm.dims(), self.input_dims)));
        }
        if fm.f.rows() != topo.num_faces() || fm.c.rows() != topo.walk_edge.len() || fm.e.rows() != topo.edge_coedges.len() {
            return Err(ModelError::Nn(crate::nn::NnError::Shape("feature rows do not match the topology".into())));
        }
        let xf = t.input(fm.f.clone());
        let xe = t.input(fm.e.clone());
        let xc = t.input(fm.c.clone());
        let mut hf = self.in_f.apply(t, p, xf)?;
        let mut he = self.in_e.apply(t, p, xe)?;
        let mut hc = self.in_c.apply(t, p, xc)?;
        for layer in &self.layers {
            let mut parts = Vec::with_capacity(WALK_LEN);
            for rows in &topo.walk_coedges {
                parts.push(t.gather(hc, rows.clone())?);
            }
            for rows in &topo.walk_faces {
                parts.push(t.gather(hf, rows.clone())?);
            }
            parts.push(t.gather(he, topo.walk_edge.clone())?);
            let z = t.concat_cols(&parts)?;
            let z = layer.coedge.apply(t, p, z)?;
            hc = t.relu(z)?;
            let pooled = t.segment_max(hc, &topo.face_coedges)?;
            let f = layer.face.apply(t, p, pooled)?;
            hf = t.relu(f)?;
            if let Some(edge) = layer.edge {
                let pooled = t.segment_max(hc, &topo.edge_coedges)?;
                let e = edge.apply(t, p, pooled)?;
                he = t.relu(e)?;
            }
        }
        Ok(hf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::builder::box_solid;
    use crate::features::featurize;
    use crate::geom::Vec3;
    use crate::nn::gradcheck::GradCheck;
    use crate::nn::Matrix;
    use crate::synth::{generate_model, GenParams};

    fn setup(b: &BRep, r: usize, seed: u64) -> (Backbone, ModelParams, FeatureMatrices, Topology) {
        let fm = featurize(b, r).unwrap();
        let mut p = ModelParams::new();
        let mut rng = SplitMix64::new(seed);
        let bb = Backbone::new(BackboneConfig::default(), fm.dims(), &mut p, &mut rng).unwrap();
        (bb, p, fm, Topology::new(b).unwrap())
    }

    fn embed(bb: &Backbone, p: &ModelParams, fm: &FeatureMatrices, topo: &Topology) -> Matrix {
        let mut t = Tape::new();
        let v = bb.forward(&mut t, p, fm, topo).unwrap();
        t.value(v).clone()
    }

    #[test]
    fn box_embedding_shape() {
        let (bb, p, fm, topo) = setup(&box_solid(Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0)), 5, 1);
        let out = embed(&bb, &p, &fm, &topo);
        assert_eq!(out.shape(), (6, 64));
        assert!(out.is_finite());
    }

    #[test]
    fn relabeling_permutes_face_rows() {
        let b = generate_model(11, &GenParams { steps_min: 3, steps_max: 3, ..Default::default() }).unwrap().brep;
        let mut rng = SplitMix64::new(5);
        let mut fp: Vec<usize> = (0..b.num_faces()).collect();
        let mut ep: Vec<usize> = (0..b.num_edges()).collect();
        let mut cp: Vec<usize> = (0..b.num_coedges()).collect();
        rng.shuffle(&mut fp);
        rng.shuffle(&mut ep);
        rng.shuffle(&mut cp);
        let q = b.relabeled(&fp, &ep, &cp);
        let (bb, p, fm, topo) = setup(&b, 3, 2);
        let a = embed(&bb, &p, &fm, &topo);
        let fmq = featurize(&q, 3).unwrap();
        let bq = embed(&bb, &p, &fmq, &Topology::new(&q).unwrap());
        for (old, &new) in fp.iter().enumerate() {
            for (x, y) in a.row(old).iter().zip(bq.row(new)) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn identical_models_embed_identically() {
        let b = box_solid(Vec3::ZERO, Vec3::new(1.0, 1.0, 2.0));
        let (bb, p, fm, topo) = setup(&b, 3, 3);
        assert_eq!(embed(&bb, &p, &fm, &topo), embed(&bb, &p, &featurize(&b.clone(), 3).unwrap(), &topo));
    }

    #[test]
    fn ties_route_gradient_to_lowest_coedge() {
        // A constant coedge feature makes every coedge of a face equal after the
        // input projection, so the pool picks the first listed coedge.
        let mut t = Tape::new();
        let x = t.input(Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap());
        let m = t.segment_max(x, &[vec![0, 1, 2]]).unwrap();
        let s = t.sum_all(m).unwrap();
        let g = t.gradients(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn mean_embedding_gradient_matches_finite_differences() {
        let b = generate_model(4, &GenParams { steps_min: 2, steps_max: 2, ..Default::default() }).unwrap().brep;
        let (bb, p, fm, topo) = setup(&b, 2, 9);
        let r = GradCheck { samples_per_param: Some(6), seed: 1, ..Default::default() }
            .run(&p, |p, t| {
                let f = bb.forward(t, p, &fm, &topo).map_err(|e| crate::nn::NnError::Graph(e.to_string()))?;
                t.mean_all(f)
            })
            .unwrap();
        assert!(r.max_rel_err <= 1e-5, "{r:?}");
    }
}
