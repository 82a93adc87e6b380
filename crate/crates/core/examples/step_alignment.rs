//! Aligns predicted step columns to ground-truth steps and evaluates the
//! step loss, showing it ignores how steps are numbered.

use cadops::heads::{align_steps, hungarian, step_loss_value};
use cadops::nn::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cost = Matrix::from_vec(3, 3, vec![4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0])?;
    let a = hungarian(&cost)?;
    println!("assignment {:?}, cost {}", a.perm, a.total_cost);

    // Five faces in two steps; the network put step 0 in column 2.
    let gt = [0, 0, 0, 1, 1];
    let s_hat = Matrix::from_vec(
        5,
        3,
        vec![0.1, 0.1, 0.8, 0.2, 0.1, 0.7, 0.1, 0.2, 0.7, 0.1, 0.8, 0.1, 0.3, 0.6, 0.1],
    )?;
    let al = align_steps(&gt, &s_hat)?;
    println!("GT step -> column {:?}", al.perm);
    println!("step loss {:.6}", step_loss_value(&gt, &s_hat)?);
    let renumbered = [1, 1, 1, 0, 0];
    println!("renumbered {:.6}", step_loss_value(&renumbered, &s_hat)?);
    Ok(())
}
