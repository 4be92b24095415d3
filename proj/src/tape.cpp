#include "rematch/tape.hpp"

#include <cmath>

namespace rematch::ad {

namespace {
double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }
double sigmoid_d(double t) { return 1.0 / (1.0 + std::exp(-t)); }
}  // namespace

Var Tape::push(Mat value, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), Mat{}, std::move(back)});
  return static_cast<Var>(nodes_.size() - 1);
}

Var Tape::leaf(Mat value) { return push(std::move(value), nullptr); }

Var Tape::leaf(const std::vector<double>& row) {
  Mat m(1, static_cast<int>(row.size()));
  m.a = row;
  return push(std::move(m), nullptr);
}

Var Tape::matmul(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.cols != B.rows) throw StructuralError("matmul dimension mismatch");
  Mat C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
    }
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, b, out](Tape& t) {
    const Mat& dC = t.nodes_[out].grad;
    const Mat& A = t.nodes_[a].val;
    const Mat& B = t.nodes_[b].val;
    Mat& dA = t.nodes_[a].grad;
    Mat& dB = t.nodes_[b].grad;
    // dA += dC * B^T
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < B.cols; ++j) {
        const double d = dC.at(i, j);
        if (d == 0.0) continue;
        for (int k = 0; k < A.cols; ++k) dA.at(i, k) += d * B.at(k, j);
      }
    }
    // dB += A^T * dC
    for (int k = 0; k < A.cols; ++k) {
      for (int i = 0; i < A.rows; ++i) {
        const double v = A.at(i, k);
        if (v == 0.0) continue;
        for (int j = 0; j < B.cols; ++j) dB.at(k, j) += v * dC.at(i, j);
      }
    }
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows != B.rows || A.cols != B.cols) throw StructuralError("add shape mismatch");
  Mat C = A;
  for (size_t i = 0; i < C.size(); ++i) C.a[i] += B.a[i];
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, b, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    for (size_t i = 0; i < d.size(); ++i) {
      t.nodes_[a].grad.a[i] += d.a[i];
      t.nodes_[b].grad.a[i] += d.a[i];
    }
  };
  return out;
}

Var Tape::add_rowvec(Var a, Var row) {
  const Mat& A = val(a);
  const Mat& R = val(row);
  if (R.rows != 1 || R.cols != A.cols) throw StructuralError("row broadcast shape mismatch");
  Mat C = A;
  for (int i = 0; i < C.rows; ++i) {
    for (int j = 0; j < C.cols; ++j) C.at(i, j) += R.at(0, j);
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, row, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    Mat& dA = t.nodes_[a].grad;
    Mat& dR = t.nodes_[row].grad;
    for (int i = 0; i < d.rows; ++i) {
      for (int j = 0; j < d.cols; ++j) {
        dA.at(i, j) += d.at(i, j);
        dR.at(0, j) += d.at(i, j);
      }
    }
  };
  return out;
}

Var Tape::hadamard(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows != B.rows || A.cols != B.cols) throw StructuralError("hadamard shape mismatch");
  Mat C = A;
  for (size_t i = 0; i < C.size(); ++i) C.a[i] *= B.a[i];
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, b, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    const Mat& A = t.nodes_[a].val;
    const Mat& B = t.nodes_[b].val;
    for (size_t i = 0; i < d.size(); ++i) {
      t.nodes_[a].grad.a[i] += d.a[i] * B.a[i];
      t.nodes_[b].grad.a[i] += d.a[i] * A.a[i];
    }
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  Mat C = val(a);
  for (double& v : C.a) v *= s;
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, s, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    for (size_t i = 0; i < d.size(); ++i) t.nodes_[a].grad.a[i] += s * d.a[i];
  };
  return out;
}

Var Tape::transpose(Var a) {
  const Mat& A = val(a);
  Mat C(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(j, i) = A.at(i, j);
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    Mat& dA = t.nodes_[a].grad;
    for (int i = 0; i < d.rows; ++i) {
      for (int j = 0; j < d.cols; ++j) dA.at(j, i) += d.at(i, j);
    }
  };
  return out;
}

Var Tape::relu(Var a) {
  Mat C = val(a);
  for (double& v : C.a) v = std::max(0.0, v);
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    const Mat& A = t.nodes_[a].val;
    for (size_t i = 0; i < d.size(); ++i) {
      if (A.a[i] > 0.0) t.nodes_[a].grad.a[i] += d.a[i];
    }
  };
  return out;
}

Var Tape::softmax_rows(Var a) {
  const Mat& A = val(a);
  Mat C(A.rows, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    double mx = A.at(i, 0);
    for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      C.at(i, j) = std::exp(A.at(i, j) - mx);
      sum += C.at(i, j);
    }
    for (int j = 0; j < A.cols; ++j) C.at(i, j) /= sum;
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    const Mat& P = t.nodes_[out].val;
    Mat& dA = t.nodes_[a].grad;
    for (int i = 0; i < d.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < d.cols; ++j) dot += d.at(i, j) * P.at(i, j);
      for (int j = 0; j < d.cols; ++j) dA.at(i, j) += P.at(i, j) * (d.at(i, j) - dot);
    }
  };
  return out;
}

Var Tape::layernorm_rows(Var x, Var gain, Var bias) {
  constexpr double kEps = 1e-5;
  const Mat& X = val(x);
  const Mat& G = val(gain);
  const Mat& B = val(bias);
  if (G.rows != 1 || B.rows != 1 || G.cols != X.cols || B.cols != X.cols) {
    throw StructuralError("layernorm parameter shape mismatch");
  }
  Mat C(X.rows, X.cols);
  Mat xhat(X.rows, X.cols);
  std::vector<double> inv_std(X.rows);
  for (int i = 0; i < X.rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < X.cols; ++j) mean += X.at(i, j);
    mean /= X.cols;
    double var = 0.0;
    for (int j = 0; j < X.cols; ++j) {
      double c = X.at(i, j) - mean;
      var += c * c;
    }
    var /= X.cols;
    inv_std[i] = 1.0 / std::sqrt(var + kEps);
    for (int j = 0; j < X.cols; ++j) {
      xhat.at(i, j) = (X.at(i, j) - mean) * inv_std[i];
      C.at(i, j) = G.at(0, j) * xhat.at(i, j) + B.at(0, j);
    }
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [x, gain, bias, out, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    const Mat& G = t.nodes_[gain].val;
    Mat& dX = t.nodes_[x].grad;
    Mat& dG = t.nodes_[gain].grad;
    Mat& dB = t.nodes_[bias].grad;
    const int n = d.cols;
    for (int i = 0; i < d.rows; ++i) {
      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (int j = 0; j < n; ++j) {
        const double dy = d.at(i, j);
        dG.at(0, j) += dy * xhat.at(i, j);
        dB.at(0, j) += dy;
        const double dxh = dy * G.at(0, j);
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xhat.at(i, j);
      }
      for (int j = 0; j < n; ++j) {
        const double dxh = d.at(i, j) * G.at(0, j);
        dX.at(i, j) +=
            inv_std[i] * (dxh - sum_dxh / n - xhat.at(i, j) * sum_dxh_xh / n);
      }
    }
  };
  return out;
}

Var Tape::slice_cols(Var a, int start, int n) {
  const Mat& A = val(a);
  if (start < 0 || n <= 0 || start + n > A.cols) throw StructuralError("bad column slice");
  Mat C(A.rows, n);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < n; ++j) C.at(i, j) = A.at(i, start + j);
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, start, n, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    Mat& dA = t.nodes_[a].grad;
    for (int i = 0; i < d.rows; ++i) {
      for (int j = 0; j < n; ++j) dA.at(i, start + j) += d.at(i, j);
    }
  };
  return out;
}

Var Tape::slice_rows(Var a, int start, int n) {
  const Mat& A = val(a);
  if (start < 0 || n <= 0 || start + n > A.rows) throw StructuralError("bad row slice");
  Mat C(n, A.cols);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(start + i, j);
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, start, n, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    Mat& dA = t.nodes_[a].grad;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d.cols; ++j) dA.at(start + i, j) += d.at(i, j);
    }
  };
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw StructuralError("concat of nothing");
  int rows = val(parts[0]).rows;
  int cols = 0;
  for (Var p : parts) {
    if (val(p).rows != rows) throw StructuralError("concat_cols row mismatch");
    cols += val(p).cols;
  }
  Mat C(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Mat& P = val(p);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < P.cols; ++j) C.at(i, off + j) = P.at(i, j);
    }
    off += P.cols;
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [parts, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    int off = 0;
    for (Var p : parts) {
      Mat& dP = t.nodes_[p].grad;
      for (int i = 0; i < d.rows; ++i) {
        for (int j = 0; j < dP.cols; ++j) dP.at(i, j) += d.at(i, off + j);
      }
      off += dP.cols;
    }
  };
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw StructuralError("concat of nothing");
  int cols = val(parts[0]).cols;
  int rows = 0;
  for (Var p : parts) {
    if (val(p).cols != cols) throw StructuralError("concat_rows column mismatch");
    rows += val(p).rows;
  }
  Mat C(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Mat& P = val(p);
    for (int i = 0; i < P.rows; ++i) {
      for (int j = 0; j < cols; ++j) C.at(off + i, j) = P.at(i, j);
    }
    off += P.rows;
  }
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [parts, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    int off = 0;
    for (Var p : parts) {
      Mat& dP = t.nodes_[p].grad;
      for (int i = 0; i < dP.rows; ++i) {
        for (int j = 0; j < d.cols; ++j) dP.at(i, j) += d.at(off + i, j);
      }
      off += dP.rows;
    }
  };
  return out;
}

Var Tape::mean_rows(Var a) {
  const Mat& A = val(a);
  Mat C(1, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(0, j) += A.at(i, j);
  }
  for (int j = 0; j < A.cols; ++j) C.at(0, j) /= A.rows;
  const int rows = A.rows;
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, rows, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    Mat& dA = t.nodes_[a].grad;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < d.cols; ++j) dA.at(i, j) += d.at(0, j) / rows;
    }
  };
  return out;
}

Var Tape::reshape_row(Var a) {
  const Mat& A = val(a);
  Mat C(1, static_cast<int>(A.size()));
  C.a = A.a;
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    Mat& dA = t.nodes_[a].grad;
    for (size_t i = 0; i < d.size(); ++i) dA.a[i] += d.a[i];
  };
  return out;
}

Var Tape::sigmoid(Var a) {
  Mat C = val(a);
  for (double& v : C.a) v = sigmoid_d(v);
  Var out = push(std::move(C), nullptr);
  nodes_[out].back = [a, out](Tape& t) {
    const Mat& d = t.nodes_[out].grad;
    const Mat& P = t.nodes_[out].val;
    for (size_t i = 0; i < d.size(); ++i) {
      t.nodes_[a].grad.a[i] += d.a[i] * P.a[i] * (1.0 - P.a[i]);
    }
  };
  return out;
}

Var Tape::weighted_bce_with_logit(Var logit, double y, double pos_w, double neg_w) {
  const Mat& Z = val(logit);
  if (Z.rows != 1 || Z.cols != 1) throw StructuralError("loss expects a 1x1 logit");
  const double z = Z.at(0, 0);
  const double a = pos_w * y;
  const double b = neg_w * (1.0 - y);
  Mat L(1, 1);
  L.at(0, 0) = a * softplus(-z) + b * softplus(z);
  Var out = push(std::move(L), nullptr);
  nodes_[out].back = [logit, a, b, z, out](Tape& t) {
    const double d = t.nodes_[out].grad.at(0, 0);
    const double s = sigmoid_d(z);
    t.nodes_[logit].grad.at(0, 0) += d * (a * (s - 1.0) + b * s);
  };
  return out;
}

void Tape::backward(Var loss) {
  const Mat& L = val(loss);
  if (L.rows != 1 || L.cols != 1) throw StructuralError("backward expects a scalar loss");
  for (Node& n : nodes_) {
    n.grad = Mat(n.val.rows, n.val.cols);
  }
  nodes_[loss].grad.at(0, 0) = 1.0;
  for (Var v = loss; v >= 0; --v) {
    if (nodes_[v].back) nodes_[v].back(*this);
  }
}

}  // namespace rematch::ad
