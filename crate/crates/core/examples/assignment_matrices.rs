//! Derives the buffer, DRAM, lifetime and producer matrices for a small
//! assignment of kernels to partitions.

use dfmap::graph::Tensor;
use dfmap::mapmat::AssignmentMatrices;

fn bits(row: &[bool]) -> String {
    row.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn main() -> dfmap::Result<()> {
    // Kernels 0..4 on partitions 0, 0, 1, 3; three tensors.
    let tensors = [
        Tensor { id: 0, src: 0, dst: 1, bytes: 4e6 },
        Tensor { id: 1, src: 1, dst: 2, bytes: 8e6 },
        Tensor { id: 2, src: 0, dst: 3, bytes: 2e6 },
    ];
    let m = AssignmentMatrices::from_partitions(&[0, 0, 1, 3], 4, &tensors)?;
    println!("tensor  B     D     L     H");
    for j in 0..tensors.len() {
        println!("{j:>6}  {}  {}  {}  {}", bits(&m.b[j]), bits(&m.d[j]), bits(&m.l[j]), bits(&m.h[j]));
    }
    let bytes: Vec<f64> = tensors.iter().map(|t| t.bytes).collect();
    println!("SRAM bytes per partition {:?}", AssignmentMatrices::aggregate(&m.b, &bytes, m.p_max));
    println!("DRAM traffic per partition {:?}", AssignmentMatrices::aggregate(&m.d, &bytes, m.p_max));
    println!("DRAM live bytes per partition {:?}", AssignmentMatrices::aggregate(&m.l, &bytes, m.p_max));

    let backwards = AssignmentMatrices::from_partitions(&[1, 0, 1, 3], 4, &tensors);
    println!("backward assignment: {}", backwards.unwrap_err());
    Ok(())
}
