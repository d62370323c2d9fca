/* The public header must compile as plain C. */
#include "mmplug/mmplug.h"

int main(void) {
  mmp_server_options opt;
  mmp_server_options_init(&opt);
  return mmp_status_name(MMP_OK)[0] == 'o' ? 0 : 1;
}
