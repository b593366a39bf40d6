//! Rigid-body spring relaxation.
//!
//! Every mating link contributes two zero-length unit springs joining the
//! endpoints of its edges. Pieces are simulated as uniform-density rigid
//! bodies; the piece with the most links is pinned. Phase 1 lets pieces pass
//! through each other, phase 2 forbids overlaps.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{intersection_area, penetration, Point2, Polygon, RigidTransform};
use crate::mating_graph::{EdgeRef, Mating, MatingGraph};

/// A vertex of a piece, by index in the piece's vertex list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexRef {
    pub piece: usize,
    pub vertex: usize,
}

/// Zero-length spring with unit stiffness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Spring {
    pub a: VertexRef,
    pub b: VertexRef,
}

impl Spring {
    pub const REST_LENGTH: f64 = 0.0;
    pub const STIFFNESS: f64 = 1.0;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub timestep: f64,
    /// Velocity multiplier applied every step.
    pub damping: f64,
    pub phase1_max_steps: usize,
    pub phase2_max_steps: usize,
    /// Relative kinetic-energy tolerance; multiplied by the total finite
    /// mass and the squared puzzle scale.
    pub convergence_kinetic_tol: f64,
    /// Relative tolerance of the overlapping phase, which has no contact
    /// jitter and settles much further.
    pub phase1_kinetic_tol: f64,
    /// Consecutive steps the kinetic energy must stay below tolerance.
    pub settle_steps: usize,
    /// Overlap-resolution sweeps per phase-2 step.
    pub projection_iterations: usize,
    pub rng_seed: u64,
    /// Record the total mechanical energy at every phase-1 step.
    pub record_energy: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            timestep: 1.0 / 60.0,
            damping: 0.98,
            phase1_max_steps: 20000,
            phase2_max_steps: 10000,
            convergence_kinetic_tol: 1e-8,
            phase1_kinetic_tol: 1e-10,
            settle_steps: 10,
            projection_iterations: 4,
            rng_seed: 0,
            record_energy: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return Err(Error::InvalidParameter(format!("timestep {}", self.timestep)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping {}", self.damping)));
        }
        for tol in [self.convergence_kinetic_tol, self.phase1_kinetic_tol] {
            if !(tol >= 0.0) {
                return Err(Error::InvalidParameter(format!("kinetic tolerance {tol}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Body {
    pub piece: usize,
    /// `f64::INFINITY` for the anchor.
    pub mass: f64,
    pub inertia: f64,
    /// World position of the centre of mass.
    pub com: Point2,
    pub angle: f64,
    pub velocity: Point2,
    pub angular_velocity: f64,
    local_com: Point2,
    radius: f64,
}

impl Body {
    pub fn is_fixed(&self) -> bool {
        self.mass.is_infinite()
    }

    pub fn pose(&self) -> RigidTransform {
        let r = RigidTransform::new(self.angle, Point2::ORIGIN);
        RigidTransform::new(self.angle, self.com - r.rotate(self.local_com))
    }

    fn inv_mass(&self) -> f64 {
        if self.is_fixed() {
            0.0
        } else {
            1.0 / self.mass
        }
    }

    fn kinetic(&self) -> f64 {
        if self.is_fixed() {
            0.0
        } else {
            0.5 * self.mass * self.velocity.norm_sq() + 0.5 * self.inertia * self.angular_velocity.powi(2)
        }
    }
}

/// Second polar moment of area about the centroid.
fn polar_moment(poly: &Polygon) -> f64 {
    let v = poly.vertices();
    let n = v.len();
    let mut j = 0.0;
    for i in 0..n {
        let (p, q) = (v[i], v[(i + 1) % n]);
        let c = p.cross(q);
        j += c * (p.x * p.x + p.x * q.x + q.x * q.x + p.y * p.y + p.y * q.y + q.y * q.y);
    }
    j / 12.0 - poly.area() * poly.centroid().norm_sq()
}

/// Piece with the most mating links; ties go to the lowest id.
pub fn select_anchor(g: &MatingGraph) -> usize {
    argmax_count(&g.piece_mating_counts())
}

fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn link_counts(n: usize, matings: &[Mating]) -> Vec<usize> {
    let mut counts = vec![0; n];
    for m in matings {
        counts[m.a.piece] += 1;
        counts[m.b.piece] += 1;
    }
    counts
}

/// The two vertex pairs joined when edges `a` and `b` abut. Edge
/// `(v_j, v_{j+1})` of one piece runs opposite to `(v_u, v_{u+1})` of the
/// other, so `v_j` meets `v_{u+1}` and `v_{j+1}` meets `v_u`.
pub fn mating_vertices(a: EdgeRef, b: EdgeRef, polys: &[Polygon]) -> [Spring; 2] {
    let na = polys[a.piece].len();
    let nb = polys[b.piece].len();
    let va = |k: usize| VertexRef {
        piece: a.piece,
        vertex: k % na,
    };
    let vb = |k: usize| VertexRef {
        piece: b.piece,
        vertex: k % nb,
    };
    [
        Spring {
            a: va(a.edge),
            b: vb(b.edge + 1),
        },
        Spring {
            a: va(a.edge + 1),
            b: vb(b.edge),
        },
    ]
}

pub fn springs_for(matings: &[Mating], polys: &[Polygon]) -> Vec<Spring> {
    matings.iter().flat_map(|m| mating_vertices(m.a, m.b, polys)).collect()
}

fn world_vertex(polys: &[Polygon], transforms: &[RigidTransform], v: VertexRef) -> Point2 {
    transforms[v.piece].apply(polys[v.piece].vertex(v.vertex))
}

/// `½ Σ ‖Δv‖²` over both vertex pairs of every mating.
pub fn energy(polys: &[Polygon], transforms: &[RigidTransform], matings: &[Mating]) -> f64 {
    spring_energy(polys, transforms, &springs_for(matings, polys))
}

fn spring_energy(polys: &[Polygon], transforms: &[RigidTransform], springs: &[Spring]) -> f64 {
    0.5 * springs
        .iter()
        .map(|s| (world_vertex(polys, transforms, s.a) - world_vertex(polys, transforms, s.b)).norm_sq())
        .sum::<f64>()
}

/// Sum of pairwise intersection areas.
pub fn overlap_area(polys: &[Polygon], transforms: &[RigidTransform]) -> f64 {
    let world: Vec<Polygon> = polys.iter().zip(transforms).map(|(p, t)| p.transformed(t)).collect();
    let boxes: Vec<(Point2, Point2)> = world.iter().map(Polygon::bbox).collect();
    let mut total = 0.0;
    for i in 0..world.len() {
        for j in i + 1..world.len() {
            let (a, b) = (boxes[i], boxes[j]);
            if a.1.x <= b.0.x || b.1.x <= a.0.x || a.1.y <= b.0.y || b.1.y <= a.0.y {
                continue;
            }
            total += intersection_area(&world[i], &world[j]);
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxReport {
    pub anchor: usize,
    /// Poses at the end of the collision-free phase.
    pub phase1: Vec<RigidTransform>,
    pub transforms: Vec<RigidTransform>,
    pub phase1_energy: f64,
    pub energy: f64,
    pub overlap_area: f64,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub phase1_converged: bool,
    pub converged: bool,
    /// Kinetic plus spring energy per phase-1 step, if requested.
    pub energy_trace: Vec<f64>,
}

/// Scale used for the arena radius and the kinetic tolerance: the diameter
/// of a square with the pieces' total area.
pub fn arena_scale(polys: &[Polygon]) -> f64 {
    (2.0 * polys.iter().map(Polygon::area).sum::<f64>()).sqrt()
}

/// Absolute kinetic-energy threshold for convergence of the contact phase.
pub fn kinetic_tolerance(polys: &[Polygon], anchor: usize, config: &SimConfig) -> f64 {
    absolute_tolerance(polys, anchor, config.convergence_kinetic_tol)
}

/// Absolute kinetic-energy threshold for convergence of the overlapping
/// phase.
pub fn phase1_kinetic_tolerance(polys: &[Polygon], anchor: usize, config: &SimConfig) -> f64 {
    absolute_tolerance(polys, anchor, config.phase1_kinetic_tol)
}

fn absolute_tolerance(polys: &[Polygon], anchor: usize, relative: f64) -> f64 {
    let mean_area = polys.iter().map(Polygon::area).sum::<f64>() / polys.len() as f64;
    let finite_mass: f64 = polys
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != anchor)
        .map(|(_, p)| p.area() / mean_area)
        .sum();
    let scale = arena_scale(polys);
    relative * finite_mass * scale * scale
}

struct Sim<'a> {
    polys: &'a [Polygon],
    springs: Vec<Spring>,
    bodies: Vec<Body>,
    cfg: &'a SimConfig,
}

impl Sim<'_> {
    fn poses(&self) -> Vec<RigidTransform> {
        self.bodies
            .iter()
            .map(|b| if b.is_fixed() { RigidTransform::IDENTITY } else { b.pose() })
            .collect()
    }

    fn kinetic(&self) -> f64 {
        self.bodies.iter().map(Body::kinetic).sum()
    }

    fn step(&mut self) {
        let poses = self.poses();
        let n = self.bodies.len();
        let mut force = vec![Point2::ORIGIN; n];
        let mut torque = vec![0.0; n];
        for s in &self.springs {
            let pa = world_vertex(self.polys, &poses, s.a);
            let pb = world_vertex(self.polys, &poses, s.b);
            let f = (pb - pa) * Spring::STIFFNESS;
            force[s.a.piece] = force[s.a.piece] + f;
            torque[s.a.piece] += (pa - self.bodies[s.a.piece].com).cross(f);
            force[s.b.piece] = force[s.b.piece] - f;
            torque[s.b.piece] -= (pb - self.bodies[s.b.piece].com).cross(f);
        }
        let (dt, damp) = (self.cfg.timestep, self.cfg.damping);
        for (i, b) in self.bodies.iter_mut().enumerate() {
            if b.is_fixed() {
                continue;
            }
            b.velocity = (b.velocity + force[i] * (dt / b.mass)) * damp;
            b.angular_velocity = (b.angular_velocity + torque[i] * dt / b.inertia) * damp;
            b.com = b.com + b.velocity * dt;
            b.angle += b.angular_velocity * dt;
        }
    }

    /// One sweep of pairwise overlap removal. Returns whether any pair was
    /// found overlapping.
    fn project(&mut self, slop: f64, fix_velocity: bool) -> bool {
        let n = self.bodies.len();
        let mut world: Vec<Polygon> = self
            .polys
            .iter()
            .zip(self.poses())
            .map(|(p, t)| p.transformed(&t))
            .collect();
        let mut any = false;
        for i in 0..n {
            for j in i + 1..n {
                let (bi, bj) = (&self.bodies[i], &self.bodies[j]);
                if bi.com.dist(bj.com) >= bi.radius + bj.radius {
                    continue;
                }
                let (wi, wj) = (bi.inv_mass(), bj.inv_mass());
                if wi + wj == 0.0 {
                    continue;
                }
                let Some((normal, depth)) = penetration(&world[i], &world[j]) else {
                    continue;
                };
                any = true;
                let push = depth + slop;
                let (si, sj) = (wi / (wi + wj), wj / (wi + wj));
                self.bodies[i].com = self.bodies[i].com - normal * (push * si);
                self.bodies[j].com = self.bodies[j].com + normal * (push * sj);
                if fix_velocity {
                    let vn = (self.bodies[j].velocity - self.bodies[i].velocity).dot(normal);
                    if vn < 0.0 {
                        self.bodies[i].velocity = self.bodies[i].velocity + normal * (vn * si);
                        self.bodies[j].velocity = self.bodies[j].velocity - normal * (vn * sj);
                    }
                }
                for k in [i, j] {
                    let pose = if self.bodies[k].is_fixed() {
                        RigidTransform::IDENTITY
                    } else {
                        self.bodies[k].pose()
                    };
                    world[k] = self.polys[k].transformed(&pose);
                }
            }
        }
        any
    }

    /// Steps until the kinetic energy stays below `tol` for the configured
    /// number of consecutive steps. Returns `(steps, converged)`.
    fn run(
        &mut self,
        max_steps: usize,
        tol: f64,
        collisions: bool,
        mut trace: Option<&mut (dyn Write + '_)>,
        phase: u8,
        energies: Option<&mut Vec<f64>>,
    ) -> Result<(usize, bool)> {
        let mut calm = 0;
        let mut energies = energies;
        for step in 1..=max_steps {
            self.step();
            if collisions {
                for _ in 0..self.cfg.projection_iterations {
                    if !self.project(0.0, true) {
                        break;
                    }
                }
            }
            let ke = self.kinetic();
            if let Some(e) = energies.as_deref_mut() {
                e.push(ke + spring_energy(self.polys, &self.poses(), &self.springs));
            }
            if let Some(w) = trace.as_deref_mut() {
                let poses = self.poses();
                let e = spring_energy(self.polys, &poses, &self.springs);
                for (i, t) in poses.iter().enumerate() {
                    writeln!(
                        w,
                        "{phase},{step},{i},{},{},{},{e},{ke}",
                        t.translation.x,
                        t.translation.y,
                        t.angle()
                    )?;
                }
            }
            calm = if ke <= tol { calm + 1 } else { 0 };
            if calm >= self.cfg.settle_steps.max(1) {
                return Ok((step, true));
            }
        }
        Ok((max_steps, false))
    }
}

fn validate_matings(polys: &[Polygon], matings: &[Mating]) -> Result<()> {
    for m in matings {
        for e in [m.a, m.b] {
            if e.piece >= polys.len() || e.edge >= polys[e.piece].len() {
                return Err(Error::DanglingReference(format!("edge {e}")));
            }
        }
        if m.a.piece == m.b.piece {
            return Err(Error::InvalidParameter(format!("mating {m} joins a piece to itself")));
        }
    }
    Ok(())
}

/// Runs both simulation phases from seeded random initial poses.
pub fn relax(polys: &[Polygon], matings: &[Mating], config: &SimConfig) -> Result<RelaxReport> {
    relax_traced(polys, matings, config, None)
}

/// [`relax`], optionally writing one CSV row per piece and step:
/// `phase,step,piece,tx,ty,angle,spring_energy,kinetic_energy`.
pub fn relax_traced(
    polys: &[Polygon],
    matings: &[Mating],
    config: &SimConfig,
    mut trace: Option<&mut (dyn Write + '_)>,
) -> Result<RelaxReport> {
    config.validate()?;
    if polys.is_empty() {
        return Err(Error::TooFewPieces(0));
    }
    validate_matings(polys, matings)?;
    let anchor = argmax_count(&link_counts(polys.len(), matings));
    let scale = arena_scale(polys);
    let mean_area = polys.iter().map(Polygon::area).sum::<f64>() / polys.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let bodies: Vec<Body> = polys
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = 2.0 * scale * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let c = p.centroid();
            let radius = p.vertices().iter().map(|v| v.dist(c)).fold(0.0, f64::max);
            let mass = p.area() / mean_area;
            let (mass, com, angle) = if i == anchor {
                (f64::INFINITY, c, 0.0)
            } else {
                (mass, Point2::new(r * phi.cos(), r * phi.sin()), angle)
            };
            Body {
                piece: i,
                mass,
                inertia: polar_moment(p) * (p.area() / mean_area) / p.area(),
                com,
                angle,
                velocity: Point2::ORIGIN,
                angular_velocity: 0.0,
                local_com: c,
                radius,
            }
        })
        .collect();
    let tol1 = phase1_kinetic_tolerance(polys, anchor, config);
    let tol2 = kinetic_tolerance(polys, anchor, config);
    if let Some(w) = trace.as_deref_mut() {
        writeln!(w, "phase,step,piece,tx,ty,angle,spring_energy,kinetic_energy")?;
    }

    let mut sim = Sim {
        polys,
        springs: springs_for(matings, polys),
        bodies,
        cfg: config,
    };
    let mut energies = Vec::new();
    let (phase1_steps, phase1_converged) = sim.run(
        config.phase1_max_steps,
        tol1,
        false,
        trace.as_deref_mut(),
        1,
        config.record_energy.then_some(&mut energies),
    )?;
    let phase1 = sim.poses();
    let phase1_energy = spring_energy(polys, &phase1, &sim.springs);

    for b in &mut sim.bodies {
        b.velocity = Point2::ORIGIN;
        b.angular_velocity = 0.0;
    }
    let (phase2_steps, phase2_converged) = sim.run(config.phase2_max_steps, tol2, true, trace, 2, None)?;
    for _ in 0..1000 {
        if !sim.project(1e-7, false) {
            break;
        }
    }
    let transforms = sim.poses();
    Ok(RelaxReport {
        anchor,
        energy: spring_energy(polys, &transforms, &sim.springs),
        overlap_area: overlap_area(polys, &transforms),
        phase1,
        transforms,
        phase1_energy,
        phase1_steps,
        phase2_steps,
        phase1_converged,
        converged: phase1_converged && phase2_converged,
        energy_trace: energies,
    })
}

/// Least-squares rigid transform taking each `from` point onto its `to`
/// partner.
pub fn fit_rigid(pairs: &[(Point2, Point2)]) -> RigidTransform {
    if pairs.is_empty() {
        return RigidTransform::IDENTITY;
    }
    let inv = 1.0 / pairs.len() as f64;
    let (mut cp, mut cq) = (Point2::ORIGIN, Point2::ORIGIN);
    for (p, q) in pairs {
        cp = cp + *p;
        cq = cq + *q;
    }
    let (cp, cq) = (cp * inv, cq * inv);
    let (mut s, mut c) = (0.0, 0.0);
    for (p, q) in pairs {
        let (a, b) = (*p - cp, *q - cq);
        c += a.dot(b);
        s += a.cross(b);
    }
    let theta = s.atan2(c);
    let r = RigidTransform::new(theta, Point2::ORIGIN);
    RigidTransform::new(theta, cq - r.rotate(cp))
}

/// Direct minimisation of the spring energy without collisions: pieces are
/// placed breadth-first from `anchor` by fitting their springs to already
/// placed neighbours, then refined by per-piece least-squares sweeps.
pub fn procrustes_relax(
    polys: &[Polygon],
    matings: &[Mating],
    anchor: usize,
    max_sweeps: usize,
) -> Result<Vec<RigidTransform>> {
    validate_matings(polys, matings)?;
    if anchor >= polys.len() {
        return Err(Error::DanglingReference(format!("anchor piece {anchor}")));
    }
    let springs = springs_for(matings, polys);
    let n = polys.len();
    let mut by_piece: Vec<Vec<(usize, usize, VertexRef)>> = vec![Vec::new(); n];
    for s in &springs {
        by_piece[s.a.piece].push((s.b.piece, s.a.vertex, s.b));
        by_piece[s.b.piece].push((s.a.piece, s.b.vertex, s.a));
    }
    let mut t = vec![RigidTransform::IDENTITY; n];
    let mut placed = vec![false; n];
    placed[anchor] = true;
    let mut queue = VecDeque::from([anchor]);
    while let Some(p) = queue.pop_front() {
        let mut next: Vec<usize> = by_piece[p].iter().map(|x| x.0).filter(|&q| !placed[q]).collect();
        next.sort_unstable();
        next.dedup();
        for q in next {
            let pairs: Vec<(Point2, Point2)> = by_piece[q]
                .iter()
                .filter(|(other, _, _)| placed[*other])
                .map(|&(_, v, partner)| (polys[q].vertex(v), world_vertex(polys, &t, partner)))
                .collect();
            t[q] = fit_rigid(&pairs);
            placed[q] = true;
            queue.push_back(q);
        }
    }
    let mut e = spring_energy(polys, &t, &springs);
    for _ in 0..max_sweeps {
        for q in 0..n {
            if q == anchor || by_piece[q].is_empty() {
                continue;
            }
            let pairs: Vec<(Point2, Point2)> = by_piece[q]
                .iter()
                .map(|&(_, v, partner)| (polys[q].vertex(v), world_vertex(polys, &t, partner)))
                .collect();
            t[q] = fit_rigid(&pairs);
        }
        let e2 = spring_energy(polys, &t, &springs);
        let done = e - e2 <= 1e-13 * e.max(1e-300) || e2 == 0.0;
        e = e2;
        if done {
            break;
        }
    }
    Ok(t)
}
