// Simulates one frame of the default link and prints the per-iteration
// trace of the hybrid receiver next to the two reference receivers.
//
//   single_frame [ebn0_db] [seed]

#include <cstdio>
#include <cstdlib>

#include "bpmf/baselines.hpp"
#include "bpmf/frame.hpp"
#include "bpmf/receiver.hpp"

int main(int argc, char** argv) {
  const double ebn0 = argc > 1 ? std::atof(argv[1]) : 4.0;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;

  const bpmf::FrameLayout layout(bpmf::LinkParams{});
  const double lambda = layout.noise_precision(ebn0);
  const auto frame = bpmf::simulate_frame(layout, lambda, seed);
  const bpmf::Truth truth{&frame.channel.freq, &frame.info_bits};

  const auto hybrid = bpmf::run_receiver(frame.obs, layout, {}, truth);
  std::printf("Eb/N0 %.2f dB, true lambda %.4g, %zu info bits per user\n", ebn0, lambda, layout.info_len());
  std::printf("%4s %10s %12s %8s %8s\n", "iter", "nmse_db", "lambda_hat", "errors", "ms");
  for (const auto& r : hybrid.diagnostics)
    std::printf("%4d %10.3f %12.5g %8ld %8.2f\n", r.iteration, r.nmse_db, r.lambda_hat, r.bit_errors, r.wall_ms);

  const auto dmf = bpmf::direct_mf_receiver(frame.obs, layout, {}, truth);
  const auto mfb = bpmf::mfb_receiver(frame.obs, layout, {&frame.channel.freq, lambda, &frame.x});
  std::printf("direct-MF: %ld errors, nmse %.3f dB\n", bpmf::count_bit_errors(dmf.bits, frame.info_bits),
              dmf.diagnostics.back().nmse_db);
  std::printf("MFB:       %ld errors\n", bpmf::count_bit_errors(mfb, frame.info_bits));
  return 0;
}
