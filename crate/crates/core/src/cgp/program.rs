use std::fmt;

use rand::Rng;

use super::genome::{Genome, INPUT_COUNT, INPUT_LABELS};
use crate::afprims::{Mode, Op, Primitive};

/// One active node of a decoded program. Operands are value slots: slots
/// `0..INPUT_COUNT` hold the inputs and slot `INPUT_COUNT + i` holds the
/// result of instruction `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instr {
    pub primitive: Primitive,
    pub args: [usize; 2],
}

impl Instr {
    fn arity(&self) -> usize {
        self.primitive.arity()
    }
}

/// A decoded genome: the active nodes in topological order plus a printable
/// expression.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledAf {
    program: Vec<Instr>,
    output_slot: usize,
    expression: String,
    genome: Genome,
}

/// Values per slot when evaluating a chunk.
const CHUNK: usize = 256;

impl CompiledAf {
    pub fn decode(genome: &Genome) -> Self {
        let active = genome.active_nodes();
        // Map genome addresses to compact slots.
        let mut slot_of = vec![usize::MAX; INPUT_COUNT + genome.nodes().len()];
        for (i, s) in slot_of.iter_mut().enumerate().take(INPUT_COUNT) {
            *s = i;
        }
        let mut program = Vec::with_capacity(active.len());
        for (k, &addr) in active.iter().enumerate() {
            let node = genome.nodes()[addr - INPUT_COUNT];
            let primitive = *genome
                .primitives()
                .get(node.f_idx)
                .expect("validated genome has in-range function indices");
            let a = slot_of[node.in1];
            let b = if primitive.arity() == 2 { slot_of[node.in2] } else { 0 };
            debug_assert!(a != usize::MAX && b != usize::MAX);
            program.push(Instr { primitive, args: [a, b] });
            slot_of[addr] = INPUT_COUNT + k;
        }
        let output_slot = slot_of[genome.output()];
        let expression = render(&program, output_slot);
        Self {
            program,
            output_slot,
            expression,
            genome: genome.clone(),
        }
    }

    pub fn program(&self) -> &[Instr] {
        &self.program
    }

    pub fn output_slot(&self) -> usize {
        self.output_slot
    }

    pub fn expression(&self) -> &str {
        &self.expression
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    pub fn has_stochastic_nodes(&self) -> bool {
        self.program.iter().any(|i| i.primitive.op.is_stochastic())
    }

    /// Eval-mode value at `x`. Non-finite intermediates propagate.
    pub fn eval(&self, x: f64) -> f64 {
        let values = self.slot_values(x);
        values[self.output_slot]
    }

    /// Every slot value at `x` in eval mode (inputs first).
    pub fn slot_values(&self, x: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(INPUT_COUNT + self.program.len());
        v.extend([x, -1.0, 1.0]);
        for ins in &self.program {
            let slope = ins.primitive.op.draw_slope(Mode::Eval, &mut NoRng);
            let y = ins.primitive.op.value(v[ins.args[0]], v[ins.args[1]], slope);
            v.push(y);
        }
        v
    }

    /// Value and derivative at `x` in eval mode.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        self.eval_dual(x, Mode::Eval, &mut NoRng)
    }

    /// Value and derivative with RReLU slopes drawn from `rng` (one draw per
    /// stochastic node per call).
    pub fn eval_train<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> (f64, f64) {
        self.eval_dual(x, Mode::Train, rng)
    }

    /// Forward-mode accumulation over the single input. Constant operands
    /// carry a zero tangent and contribute nothing, even when the local
    /// partial is infinite.
    fn eval_dual<R: Rng + ?Sized>(&self, x: f64, mode: Mode, rng: &mut R) -> (f64, f64) {
        let n = INPUT_COUNT + self.program.len();
        let mut v = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        v.extend([x, -1.0, 1.0]);
        d.extend([1.0, 0.0, 0.0]);
        for ins in &self.program {
            let slope = ins.primitive.op.draw_slope(mode, rng);
            let (a, b) = (v[ins.args[0]], v[ins.args[1]]);
            let (da, db) = (d[ins.args[0]], d[ins.args[1]]);
            let y = ins.primitive.op.value(a, b, slope);
            let (pa, pb) = ins.primitive.op.grad(a, b, slope);
            let mut dy = chain(pa, da);
            if ins.arity() == 2 {
                dy += chain(pb, db);
            }
            v.push(y);
            d.push(dy);
        }
        (v[self.output_slot], d[self.output_slot])
    }

    /// Elementwise evaluation over a slice. Writes values into `out` and, when
    /// given, derivatives into `deriv`. In train mode every stochastic node
    /// draws a fresh slope per element.
    pub fn eval_slice<R: Rng + ?Sized>(
        &self,
        xs: &[f64],
        out: &mut [f64],
        mut deriv: Option<&mut [f64]>,
        mode: Mode,
        rng: &mut R,
    ) {
        assert_eq!(xs.len(), out.len());
        if let Some(d) = deriv.as_deref() {
            assert_eq!(d.len(), xs.len());
        }
        let slots = INPUT_COUNT + self.program.len();
        let want_d = deriv.is_some();
        let mut vals = vec![0.0f64; slots * CHUNK];
        let mut ders = if want_d { vec![0.0f64; slots * CHUNK] } else { Vec::new() };
        for start in (0..xs.len()).step_by(CHUNK) {
            let len = CHUNK.min(xs.len() - start);
            vals[..len].copy_from_slice(&xs[start..start + len]);
            vals[CHUNK..CHUNK + len].fill(-1.0);
            vals[2 * CHUNK..2 * CHUNK + len].fill(1.0);
            if want_d {
                ders[..len].fill(1.0);
                ders[CHUNK..3 * CHUNK].fill(0.0);
            }
            for (k, ins) in self.program.iter().enumerate() {
                let op = ins.primitive.op;
                let (lo, hi) = vals.split_at_mut((INPUT_COUNT + k) * CHUNK);
                let a = &lo[ins.args[0] * CHUNK..ins.args[0] * CHUNK + len];
                let b = &lo[ins.args[1] * CHUNK..ins.args[1] * CHUNK + len];
                let y = &mut hi[..len];
                let eval_slope = op.draw_slope(Mode::Eval, &mut NoRng);
                let sampled = mode == Mode::Train && op.is_stochastic();
                if !want_d {
                    for j in 0..len {
                        let s = if sampled { op.draw_slope(mode, rng) } else { eval_slope };
                        y[j] = op.value(a[j], b[j], s);
                    }
                    continue;
                }
                let (dlo, dhi) = ders.split_at_mut((INPUT_COUNT + k) * CHUNK);
                let da = &dlo[ins.args[0] * CHUNK..ins.args[0] * CHUNK + len];
                let db = &dlo[ins.args[1] * CHUNK..ins.args[1] * CHUNK + len];
                let dy = &mut dhi[..len];
                let binary = ins.arity() == 2;
                for j in 0..len {
                    let s = if sampled { op.draw_slope(mode, rng) } else { eval_slope };
                    y[j] = op.value(a[j], b[j], s);
                    let (pa, pb) = op.grad(a[j], b[j], s);
                    let mut t = chain(pa, da[j]);
                    if binary {
                        t += chain(pb, db[j]);
                    }
                    dy[j] = t;
                }
            }
            let o = self.output_slot * CHUNK;
            out[start..start + len].copy_from_slice(&vals[o..o + len]);
            if let Some(d) = deriv.as_deref_mut() {
                d[start..start + len].copy_from_slice(&ders[o..o + len]);
            }
        }
    }
}

impl fmt::Display for CompiledAf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expression)
    }
}

#[inline]
fn chain(partial: f64, tangent: f64) -> f64 {
    if tangent == 0.0 {
        0.0
    } else {
        partial * tangent
    }
}

/// Decodes a genome per [`CompiledAf::decode`].
pub fn decode(genome: &Genome) -> CompiledAf {
    CompiledAf::decode(genome)
}

/// Fully parenthesized infix rendering.
fn render(program: &[Instr], output_slot: usize) -> String {
    let mut text: Vec<String> = INPUT_LABELS.iter().map(|s| s.to_string()).collect();
    for ins in program {
        let a = &text[ins.args[0]];
        let b = &text[ins.args[1]];
        let s = match ins.primitive.op {
            Op::Add => format!("({a} + {b})"),
            Op::Sub => format!("({a} - {b})"),
            Op::Mul => format!("({a} * {b})"),
            Op::Recip => format!("(1 / {a})"),
            Op::Exp => format!("exp({a})"),
            _ if ins.arity() == 2 => format!("{}({a}, {b})", ins.primitive.name),
            _ => format!("{}({a})", ins.primitive.name),
        };
        text.push(s);
    }
    text.swap_remove(output_slot)
}

/// Rng stand-in for eval-mode paths, which never draw.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval mode never samples")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval mode never samples")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("eval mode never samples")
    }
}
