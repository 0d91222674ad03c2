//! Sequential-impulse velocity solver for disk-disk and pusher-disk contacts,
//! plus bounded ground-friction impulses and positional projection.

use super::friction::friction_impulse_limits;
use super::state::{SimConfig, WorldState};
use super::Vec2;

/// Relative approach speed below which restitution is ignored.
const RESTITUTION_THRESHOLD: f64 = 1e-3;
/// The solver sweeps until every contact approaches slower than this.
const CONVERGED_APPROACH_SPEED: f64 = 1e-12;
const MAX_EXTRA_SWEEPS_FACTOR: usize = 20;

#[derive(Clone, Copy, Debug)]
struct Body {
    position: Vec2,
    velocity: Vec2,
    omega: f64,
    radius: f64,
    inv_mass: f64,
    inv_inertia: f64,
}

#[derive(Clone, Copy, Debug)]
struct Contact {
    a: usize,
    b: usize,
    /// Unit vector from `a` to `b`.
    normal: Vec2,
    normal_mass: f64,
    tangent_mass: f64,
    target_normal_velocity: f64,
    normal_impulse: f64,
    tangent_impulse: f64,
}

#[derive(Clone, Copy, Debug)]
struct GroundFriction {
    body: usize,
    mass: f64,
    inertia: f64,
    max_linear: f64,
    max_angular: f64,
    linear_impulse: Vec2,
    angular_impulse: f64,
}

/// Bodies `0..n` are the disks, body `n` is the pusher.
pub(crate) struct Solver {
    bodies: Vec<Body>,
    contacts: Vec<Contact>,
    ground: Vec<GroundFriction>,
    contact_mu: f64,
}

impl Solver {
    /// `pusher_inv_mass` is 0 for a kinematic pusher.
    pub(crate) fn new(world: &WorldState, pusher_inv_mass: f64, cfg: &SimConfig) -> Self {
        let mut bodies: Vec<Body> = world
            .disks
            .iter()
            .map(|d| Body {
                position: d.pose.position(),
                velocity: d.twist.linear(),
                omega: d.twist.omega,
                radius: d.radius,
                inv_mass: 1.0 / d.mass,
                inv_inertia: 1.0 / d.inertia(),
            })
            .collect();
        bodies.push(Body {
            position: world.pusher.position,
            velocity: world.pusher.velocity,
            omega: 0.0,
            radius: world.pusher.radius,
            inv_mass: pusher_inv_mass,
            inv_inertia: 0.0,
        });
        let mut solver = Solver {
            bodies,
            contacts: Vec::new(),
            ground: Vec::new(),
            contact_mu: cfg.contact_mu,
        };
        solver.detect_contacts(cfg);
        solver
    }

    fn detect_contacts(&mut self, cfg: &SimConfig) {
        let n = self.bodies.len();
        let pusher = n - 1;
        // Pusher pairs first so its velocity propagates outward through the
        // disk chain within one sweep; the order is fixed by index.
        let mut pairs: Vec<(usize, usize)> = (0..pusher).map(|i| (pusher, i)).collect();
        for i in 0..pusher {
            for j in (i + 1)..pusher {
                pairs.push((i, j));
            }
        }
        for (a, b) in pairs {
            let (ba, bb) = (&self.bodies[a], &self.bodies[b]);
            let delta = bb.position - ba.position;
            let dist = delta.norm();
            if dist >= ba.radius + bb.radius + cfg.penetration_tolerance {
                continue;
            }
            if ba.inv_mass == 0.0 && bb.inv_mass == 0.0 {
                continue;
            }
            let normal = if dist > 1e-12 {
                delta / dist
            } else {
                Vec2::new(1.0, 0.0)
            };
            let k_n = ba.inv_mass + bb.inv_mass;
            let k_t = k_n
                + ba.radius * ba.radius * ba.inv_inertia
                + bb.radius * bb.radius * bb.inv_inertia;
            let vn = (bb.velocity - ba.velocity).dot(&normal);
            let target = if vn < -RESTITUTION_THRESHOLD {
                -cfg.restitution * vn
            } else {
                0.0
            };
            self.contacts.push(Contact {
                a,
                b,
                normal,
                normal_mass: 1.0 / k_n,
                tangent_mass: if k_t > 0.0 { 1.0 / k_t } else { 0.0 },
                target_normal_velocity: target,
                normal_impulse: 0.0,
                tangent_impulse: 0.0,
            });
        }
    }

    pub(crate) fn add_ground_friction(&mut self, world: &WorldState, dt: f64) {
        for (i, d) in world.disks.iter().enumerate() {
            let (max_linear, max_angular) = friction_impulse_limits(d, &world.surface, dt);
            self.ground.push(GroundFriction {
                body: i,
                mass: d.mass,
                inertia: d.inertia(),
                max_linear,
                max_angular,
                linear_impulse: Vec2::zeros(),
                angular_impulse: 0.0,
            });
        }
    }

    /// Runs at least `iterations` sweeps, then keeps sweeping (up to
    /// `MAX_EXTRA_SWEEPS_FACTOR` times as many) until no contact approaches.
    pub(crate) fn solve(&mut self, iterations: usize) {
        let cap = iterations * MAX_EXTRA_SWEEPS_FACTOR;
        for sweep in 0..cap {
            for g in 0..self.ground.len() {
                self.solve_ground(g);
            }
            for c in 0..self.contacts.len() {
                self.solve_contact(c);
            }
            if sweep + 1 >= iterations && self.max_approach_speed() <= CONVERGED_APPROACH_SPEED {
                break;
            }
        }
    }

    fn max_approach_speed(&self) -> f64 {
        self.contacts
            .iter()
            .map(|c| -(self.bodies[c.b].velocity - self.bodies[c.a].velocity).dot(&c.normal))
            .fold(0.0, f64::max)
    }

    fn solve_ground(&mut self, g: usize) {
        let gf = &mut self.ground[g];
        let body = &mut self.bodies[gf.body];

        let old = gf.linear_impulse;
        let mut acc = old - body.velocity * gf.mass;
        let len = acc.norm();
        if len > gf.max_linear {
            acc *= gf.max_linear / len;
        }
        gf.linear_impulse = acc;
        body.velocity += (acc - old) / gf.mass;

        let old = gf.angular_impulse;
        let acc = (old - body.omega * gf.inertia).clamp(-gf.max_angular, gf.max_angular);
        gf.angular_impulse = acc;
        body.omega += (acc - old) / gf.inertia;
    }

    fn solve_contact(&mut self, c: usize) {
        let contact = self.contacts[c];
        let (a, b) = (self.bodies[contact.a], self.bodies[contact.b]);
        let n = contact.normal;
        let t = Vec2::new(-n.y, n.x);

        // Tangent first so the normal constraint gets the last word.
        let vt = (b.velocity - a.velocity).dot(&t) - b.omega * b.radius - a.omega * a.radius;
        let lambda = -vt * contact.tangent_mass;
        let bound = self.contact_mu * contact.normal_impulse;
        let acc = (contact.tangent_impulse + lambda).clamp(-bound, bound);
        let dt_imp = acc - contact.tangent_impulse;
        self.contacts[c].tangent_impulse = acc;
        self.apply(contact.a, contact.b, t * dt_imp, dt_imp);

        let (a, b) = (self.bodies[contact.a], self.bodies[contact.b]);
        let vn = (b.velocity - a.velocity).dot(&n);
        let lambda = (contact.target_normal_velocity - vn) * contact.normal_mass;
        let acc = (self.contacts[c].normal_impulse + lambda).max(0.0);
        let dn_imp = acc - self.contacts[c].normal_impulse;
        self.contacts[c].normal_impulse = acc;
        self.apply(contact.a, contact.b, n * dn_imp, 0.0);
    }

    /// Applies `impulse` to `b` and its negation to `a`; `tangent` is the
    /// tangential magnitude, which spins both disks.
    fn apply(&mut self, a: usize, b: usize, impulse: Vec2, tangent: f64) {
        let ba = &mut self.bodies[a];
        ba.velocity -= impulse * ba.inv_mass;
        ba.omega -= ba.inv_inertia * ba.radius * tangent;
        let bb = &mut self.bodies[b];
        bb.velocity += impulse * bb.inv_mass;
        bb.omega -= bb.inv_inertia * bb.radius * tangent;
    }

    /// Writes solved velocities back into the world.
    pub(crate) fn store(&self, world: &mut WorldState) {
        let n = world.disks.len();
        for (d, b) in world.disks.iter_mut().zip(&self.bodies[..n]) {
            d.twist.vx = b.velocity.x;
            d.twist.vy = b.velocity.y;
            d.twist.omega = b.omega;
        }
        world.pusher.velocity = self.bodies[n].velocity;
    }

    /// Normal relative velocity at every detected contact, for checks.
    #[cfg(test)]
    pub(crate) fn normal_velocities(&self) -> Vec<f64> {
        self.contacts
            .iter()
            .map(|c| (self.bodies[c.b].velocity - self.bodies[c.a].velocity).dot(&c.normal))
            .collect()
    }
}

/// Pushes overlapping bodies apart along the center line, splitting the
/// correction by inverse mass. Overlap above `deep_threshold` is removed in
/// full and counted; shallower overlap is reduced by `beta` (but always to
/// within the tolerance) when `beta` is given, and left alone otherwise.
pub(crate) fn project_positions(world: &mut WorldState, pusher_inv_mass: f64, beta: Option<f64>, cfg: &SimConfig) {
    let tol = cfg.penetration_tolerance;
    let deep_threshold = 10.0 * tol;
    let n = world.disks.len();
    let mut deep = 0u64;
    for pass in 0..4 {
        let mut moved = false;
        for a in 0..=n {
            for b in (a + 1)..=n {
                // Pusher is body `n`; it always plays the `a` role below.
                let (ia, ib) = if b == n { (n, a) } else { (a, b) };
                let (pa, ra, inv_a) = body_geom(world, ia, pusher_inv_mass);
                let (pb, rb, inv_b) = body_geom(world, ib, pusher_inv_mass);
                if inv_a + inv_b == 0.0 {
                    continue;
                }
                let delta = pb - pa;
                let dist = delta.norm();
                let pen = ra + rb - dist;
                if pen <= 0.0 {
                    continue;
                }
                let correction = if pen > deep_threshold {
                    if pass == 0 {
                        deep += 1;
                    }
                    pen
                } else {
                    match beta {
                        Some(beta) if pen > 0.0 => (beta * pen).max(pen - tol),
                        _ => continue,
                    }
                };
                if correction <= 0.0 {
                    continue;
                }
                let normal = if dist > 1e-12 { delta / dist } else { Vec2::new(1.0, 0.0) };
                let share_a = inv_a / (inv_a + inv_b);
                let share_b = inv_b / (inv_a + inv_b);
                shift(world, ia, -normal * (correction * share_a));
                shift(world, ib, normal * (correction * share_b));
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    world.diagnostics.deep_penetrations += deep;
}

fn body_geom(world: &WorldState, i: usize, pusher_inv_mass: f64) -> (Vec2, f64, f64) {
    if i == world.disks.len() {
        (world.pusher.position, world.pusher.radius, pusher_inv_mass)
    } else {
        let d = &world.disks[i];
        (d.pose.position(), d.radius, 1.0 / d.mass)
    }
}

fn shift(world: &mut WorldState, i: usize, by: Vec2) {
    if by.x == 0.0 && by.y == 0.0 {
        return;
    }
    if i == world.disks.len() {
        world.pusher.position += by;
    } else {
        let p = &mut world.disks[i].pose;
        p.x += by.x;
        p.y += by.y;
    }
}
