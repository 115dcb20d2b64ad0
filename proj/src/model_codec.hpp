// Model block encoding shared by the PXN1 and PXC1 containers.
#pragma once

#include "binary_io.hpp"
#include "pixadapt/nn_core.hpp"

namespace pixadapt::nn::detail {

void encode_model(pixadapt::detail::ByteWriter& writer, const MlpModel& model);
MlpModel decode_model(pixadapt::detail::ByteReader& reader);

}  // namespace pixadapt::nn::detail
