//! Acceptance gate, criterion 11: TensorFile round-trips are bit-exact and
//! every documented error path returns its specified exit code.

use std::process::Command;

use proscale_cli::tensorfile::{decode, encode};
use proscale_core::numerics::{Dtype, Tensor};

fn exit_code(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_proscale"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

#[test]
fn c11_format_and_exit_code_contract() {
    // Bit-exact round-trip across shapes and both dtypes.
    for dtype in [Dtype::F32, Dtype::F64] {
        for shape in [vec![1], vec![16], vec![5, 3], vec![2, 4, 6], vec![3, 1, 2, 2]] {
            let numel: usize = shape.iter().product();
            let data: Vec<f64> = (0..numel).map(|i| (i as f64).sin() * 7.3).collect();
            let t = Tensor::new(shape, data, Dtype::F64).unwrap().cast(dtype);
            let bytes = encode(&t).unwrap();
            let back = decode(&bytes).unwrap();
            assert_eq!(encode(&back).unwrap(), bytes);
            assert_eq!(back.dtype(), dtype);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let tokens = dir.path().join("tokens.pstf");
    proscale_cli::tensorfile::write(&tokens, &Tensor::full(vec![8, 4], 1.0, Dtype::F64)).unwrap();
    let garbage = dir.path().join("garbage.pstf");
    std::fs::write(&garbage, b"PSTQ....").unwrap();

    // 0: success paths.
    assert_eq!(exit_code(&["plan", "--height", "64", "--width", "64", "--config", "1,1,1"]), 0);
    assert_eq!(
        exit_code(&["redundancy", "--input", tokens.to_str().unwrap(), "--max-distance", "4"]),
        0
    );
    assert_eq!(exit_code(&["gradcheck", "--op", "matmul"]), 0);

    // 1: validation errors.
    assert_eq!(exit_code(&["plan", "--height", "64", "--width", "64", "--config", "3,3"]), 1);
    assert_eq!(exit_code(&["plan", "--height", "8", "--width", "8", "--config", "1,1,1"]), 1);
    assert_eq!(
        exit_code(&["redundancy", "--input", tokens.to_str().unwrap(), "--max-distance", "8"]),
        1
    );
    assert_eq!(exit_code(&["redundancy", "--max-distance", "4"]), 1);
    assert_eq!(exit_code(&["gradcheck", "--op", "no-such-op"]), 1);
    assert_eq!(
        exit_code(&["encode", "--config", "1,1,1", "--height", "64", "--width", "64"]),
        1
    );

    // 2: i/o errors.
    assert_eq!(
        exit_code(&["redundancy", "--input", garbage.to_str().unwrap(), "--max-distance", "2"]),
        2
    );
    assert_eq!(
        exit_code(&[
            "redundancy", "--input", "/no/such/file.pstf", "--max-distance", "2",
        ]),
        2
    );
    assert_eq!(
        exit_code(&[
            "plan", "--height", "64", "--width", "64", "--config", "1,1,1", "--out",
            "/proc/no-such-dir/x.json",
        ]),
        2
    );

    // 3: check failures.
    assert_eq!(exit_code(&["gradcheck", "--op", "matmul", "--tolerance", "1e-15"]), 3);

    println!("PASS criterion 11: PSTF round-trip bit-exact; exit codes 0/1/2/3 honored");
}
